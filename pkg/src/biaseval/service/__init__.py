"""HTTP annotation service: tuple dispatch, judgment log, arbitration, export."""

from biaseval.service.state import (
    AnnotatorAccount,
    ArbitrationItem,
    ServiceError,
    ServiceState,
    discourse_text_id,
)
from biaseval.service.app import create_app

__all__ = [
    "AnnotatorAccount",
    "ArbitrationItem",
    "ServiceError",
    "ServiceState",
    "create_app",
    "discourse_text_id",
]
