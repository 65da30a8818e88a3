/**
 * Typed client for the annotation service API. All calls carry the
 * annotator's bearer token; service errors arrive as {code, reason} and are
 * rethrown as ApiError so flows can surface the reason inline.
 */

export interface TupleText {
  text_id: string;
  body: string;
}

export interface TuplePayload {
  tuple_id: string;
  round: number;
  texts: TupleText[];
}

export interface SessionInfo {
  session_id: string;
  annotator_id: string;
  role: 'primary' | 'arbiter';
  round: number;
  total_tuples: number;
}

export interface JudgmentRecord {
  tuple_id: string;
  annotator_id: string;
  best_id: string;
  worst_id: string;
  timestamp: string;
}

export interface NextTupleResponse {
  done: boolean;
  tuple?: TuplePayload;
}

export interface ArbitrationNextResponse {
  done: boolean;
  tuple?: TuplePayload;
  judgments?: JudgmentRecord[];
}

export interface ExportedPair {
  winner_id: string;
  loser_id: string;
  source: string;
  order_tag: string;
  round: number;
}

export interface ExportResponse {
  pairs: ExportedPair[];
  unresolved_conflicts: number;
  pending_tuples: number;
}

export interface Progress {
  total_tuples: number;
  completed_tuples: number;
  pending_tuples: number;
  unresolved_conflicts: number;
  open_arbitrations: number;
  judgments_per_annotator: Record<string, number>;
  agreement_kappa: number | null;
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly reason: string,
    readonly status: number,
  ) {
    super(`${code}: ${reason}`);
  }
}

/** Network-level failure (service unreachable); selections must survive it. */
export class NetworkError extends Error {}

/** What the flows need from the service; ApiClient is the HTTP implementation. */
export interface AnnotationApi {
  createSession(round?: number): Promise<SessionInfo>;
  nextTuple(sessionId: string): Promise<NextTupleResponse>;
  submitJudgment(
    sessionId: string,
    tupleId: string,
    bestId: string,
    worstId: string,
  ): Promise<{ accepted: boolean; judgment: JudgmentRecord }>;
  arbitrationNext(): Promise<ArbitrationNextResponse>;
  submitArbitration(
    tupleId: string,
    bestId: string,
    worstId: string,
  ): Promise<{ accepted: boolean; judgment: JudgmentRecord }>;
  progress(): Promise<Progress>;
  exportPairs(): Promise<ExportResponse>;
}

export class ApiClient implements AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          ...(body === undefined ? {} : { 'Content-Type': 'application/json' }),
        },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const code = typeof payload.code === 'string' ? payload.code : 'error';
      const reason = typeof payload.reason === 'string' ? payload.reason : response.statusText;
      throw new ApiError(code, reason, response.status);
    }
    return payload as T;
  }

  createSession(round = 1): Promise<SessionInfo> {
    return this.request<SessionInfo>('POST', '/api/session', { round });
  }

  nextTuple(sessionId: string): Promise<NextTupleResponse> {
    return this.request<NextTupleResponse>(
      'GET',
      `/api/tuple/next?session=${encodeURIComponent(sessionId)}`,
    );
  }

  submitJudgment(
    sessionId: string,
    tupleId: string,
    bestId: string,
    worstId: string,
  ): Promise<{ accepted: boolean; judgment: JudgmentRecord }> {
    return this.request('POST', '/api/judgment', {
      session_id: sessionId,
      tuple_id: tupleId,
      best_id: bestId,
      worst_id: worstId,
    });
  }

  arbitrationNext(): Promise<ArbitrationNextResponse> {
    return this.request<ArbitrationNextResponse>('GET', '/api/arbitration/next');
  }

  submitArbitration(
    tupleId: string,
    bestId: string,
    worstId: string,
  ): Promise<{ accepted: boolean; judgment: JudgmentRecord }> {
    return this.request('POST', '/api/arbitration', {
      tuple_id: tupleId,
      best_id: bestId,
      worst_id: worstId,
    });
  }

  progress(): Promise<Progress> {
    return this.request<Progress>('GET', '/api/progress');
  }

  exportPairs(): Promise<ExportResponse> {
    return this.request<ExportResponse>('GET', '/api/export/pairs');
  }
}
