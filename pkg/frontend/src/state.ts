/**
 * Flow state machines for judging and arbitration. The DOM layer renders
 * whatever these expose; every guard here mirrors a server-side check so the
 * UI cannot produce a judgment the service would reject.
 */

import {
  AnnotationApi,
  ApiError,
  JudgmentRecord,
  NetworkError,
  Progress,
  TuplePayload,
} from './api.js';

export const PANEL_LABELS = ['A', 'B', 'C', 'D'] as const;

/** Minimal key-value store; the browser passes localStorage. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

class MemoryStore implements KeyValueStore {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export interface SelectionState {
  best: number | null;
  worst: number | null;
}

/** Best/worst picks over the four panels; submit needs both, distinct. */
export class Selection {
  best: number | null = null;
  worst: number | null = null;

  selectBest(panel: number): void {
    if (panel >= 0 && panel < 4) this.best = panel;
  }

  selectWorst(panel: number): void {
    if (panel >= 0 && panel < 4) this.worst = panel;
  }

  clear(): void {
    this.best = null;
    this.worst = null;
  }

  canSubmit(): boolean {
    return this.best !== null && this.worst !== null && this.best !== this.worst;
  }

  toState(): SelectionState {
    return { best: this.best, worst: this.worst };
  }

  restore(state: SelectionState): void {
    this.best = state.best;
    this.worst = state.worst;
  }
}

/**
 * Maps a keyboard shortcut to a selection action: plain 1-4 picks the
 * friendliest (best), with the modifier held it picks the most offensive
 * (worst). Accepts either event.key ("1") or event.code ("Digit1"), since
 * Shift+1 reports key "!" on most layouts. Returns null for unrelated keys.
 */
export function shortcutAction(
  keyOrCode: string,
  modifier: boolean,
): { kind: 'best' | 'worst'; panel: number } | null {
  const digit = keyOrCode.startsWith('Digit') ? keyOrCode.slice(5) : keyOrCode;
  if (!/^[1-4]$/.test(digit)) return null;
  const panel = Number(digit) - 1;
  return { kind: modifier ? 'worst' : 'best', panel };
}

export type JudgePhase = 'idle' | 'judging' | 'done' | 'error';

export class JudgeFlow {
  phase: JudgePhase = 'idle';
  sessionId = '';
  annotatorId = '';
  totalTuples = 0;
  completed = 0;
  current: TuplePayload | null = null;
  selection = new Selection();
  /** Inline service rejection or network notice; null when clean. */
  notice: string | null = null;
  finalProgress: Progress | null = null;

  constructor(
    private readonly api: AnnotationApi,
    private readonly store: KeyValueStore = new MemoryStore(),
  ) {}

  private stashKey(): string {
    return `bws-selection:${this.annotatorId}:${this.current?.tuple_id ?? ''}`;
  }

  async start(round = 1): Promise<void> {
    const session = await this.api.createSession(round);
    this.sessionId = session.session_id;
    this.annotatorId = session.annotator_id;
    this.totalTuples = session.total_tuples;
    this.phase = 'judging';
    await this.advance();
  }

  /** Fetch the next tuple; flips to done (with progress) after the last one. */
  async advance(): Promise<void> {
    const next = await this.api.nextTuple(this.sessionId);
    if (next.done) {
      this.current = null;
      this.phase = 'done';
      this.finalProgress = await this.api.progress();
      return;
    }
    this.current = next.tuple!;
    this.selection = new Selection();
    const stashed = this.store.getItem(this.stashKey());
    if (stashed) {
      this.selection.restore(JSON.parse(stashed) as SelectionState);
    }
    this.notice = null;
  }

  selectBest(panel: number): void {
    this.selection.selectBest(panel);
    this.stash();
  }

  selectWorst(panel: number): void {
    this.selection.selectWorst(panel);
    this.stash();
  }

  private stash(): void {
    if (this.current) {
      this.store.setItem(this.stashKey(), JSON.stringify(this.selection.toState()));
    }
  }

  canSubmit(): boolean {
    return this.phase === 'judging' && this.current !== null && this.selection.canSubmit();
  }

  /**
   * Posts the judgment. A service rejection surfaces its reason and keeps
   * the selection; a network failure keeps the selection stashed locally so
   * a reload carries on where the annotator left off.
   */
  async submit(): Promise<boolean> {
    if (!this.canSubmit() || !this.current) return false;
    const texts = this.current.texts;
    const best = texts[this.selection.best!]!.text_id;
    const worst = texts[this.selection.worst!]!.text_id;
    try {
      await this.api.submitJudgment(this.sessionId, this.current.tuple_id, best, worst);
    } catch (err) {
      if (err instanceof ApiError) {
        this.notice = `rejected (${err.code}): ${err.reason}`;
        return false;
      }
      if (err instanceof NetworkError) {
        this.notice = 'network unreachable; your selection is saved locally';
        return false;
      }
      throw err;
    }
    this.store.removeItem(this.stashKey());
    this.completed += 1;
    await this.advance();
    return true;
  }
}

export type ArbitratePhase = 'idle' | 'reviewing' | 'empty' | 'error';

export class ArbitrateFlow {
  phase: ArbitratePhase = 'idle';
  current: TuplePayload | null = null;
  conflicting: JudgmentRecord[] = [];
  selection = new Selection();
  notice: string | null = null;
  resolved = 0;

  constructor(private readonly api: AnnotationApi) {}

  async advance(): Promise<void> {
    const next = await this.api.arbitrationNext();
    if (next.done) {
      this.current = null;
      this.conflicting = [];
      this.phase = 'empty';
      return;
    }
    this.current = next.tuple!;
    this.conflicting = next.judgments ?? [];
    this.selection = new Selection();
    this.notice = null;
    this.phase = 'reviewing';
  }

  canSubmit(): boolean {
    return this.phase === 'reviewing' && this.current !== null && this.selection.canSubmit();
  }

  /** The arbiter's pick is final; any distinct best/worst pair is accepted. */
  async submit(): Promise<boolean> {
    if (!this.canSubmit() || !this.current) return false;
    const texts = this.current.texts;
    const best = texts[this.selection.best!]!.text_id;
    const worst = texts[this.selection.worst!]!.text_id;
    try {
      await this.api.submitArbitration(this.current.tuple_id, best, worst);
    } catch (err) {
      if (err instanceof ApiError) {
        this.notice = `rejected (${err.code}): ${err.reason}`;
        return false;
      }
      if (err instanceof NetworkError) {
        this.notice = 'network unreachable; try again';
        return false;
      }
      throw err;
    }
    this.resolved += 1;
    await this.advance();
    return true;
  }
}
