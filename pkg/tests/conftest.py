import textwrap

import pytest

from biaseval.corpus import CountryRegistry, load_countries
from biaseval.llm.mock_server import MockChatServer
from biaseval.stub_scorer import StubScorerServer


@pytest.fixture(scope="session")
def registry() -> CountryRegistry:
    return load_countries()


@pytest.fixture()
def tiny_registry(tmp_path) -> CountryRegistry:
    """Three-country registry with the awkward cases: multi-alias, overlap,
    disambiguation suffix."""
    csv_text = textwrap.dedent("""\
        id,language,kind,surface_form
        afghanistan,en,name,Afghanistan
        afghanistan,en,demonym,Afghan
        afghanistan,en,demonym,Afghanistani
        afghanistan,zh,name,阿富汗
        dominican-republic,en,name,Dominican Republic
        dominican-republic,en,demonym,Dominican - Republic
        dominican-republic,zh,name,多米尼加共和国
        dominican-republic,zh,name,多米尼加
        dominica,en,name,Dominica
        dominica,en,demonym,Dominican - Commonwealth
        dominica,zh,name,多米尼克
        """)
    path = tmp_path / "countries.csv"
    path.write_text(csv_text, encoding="utf-8")
    return load_countries(path)


@pytest.fixture(scope="session")
def stub_scorer():
    server = StubScorerServer().start()
    yield server
    server.stop()


@pytest.fixture()
def mock_chat():
    server = MockChatServer(seed=7).start()
    yield server
    server.stop()
