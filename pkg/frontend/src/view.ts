/**
 * DOM rendering. Panels are labeled A-D, [MASK] tokens are visually
 * highlighted so annotators judge tone rather than nationality, and no
 * metric values are ever shown beside a text.
 */

import { JudgmentRecord, TuplePayload } from './api.js';
import { ArbitrateFlow, JudgeFlow, PANEL_LABELS, shortcutAction } from './state.js';

const MASK_TOKEN = '[MASK]';

/** Escape-then-highlight: the body is untrusted text. */
export function renderBodyHtml(body: string): string {
  const escaped = body
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;');
  return escaped.split(MASK_TOKEN).join(`<mark class="mask">${MASK_TOKEN}</mark>`);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderPanels(
  root: HTMLElement,
  tuple: TuplePayload,
  selection: { best: number | null; worst: number | null },
  onBest: (panel: number) => void,
  onWorst: (panel: number) => void,
): void {
  const grid = el('div', 'panel-grid');
  tuple.texts.forEach((text, index) => {
    const panel = el('section', 'panel');
    if (selection.best === index) panel.classList.add('is-best');
    if (selection.worst === index) panel.classList.add('is-worst');

    const header = el('header', 'panel-header', `Text ${PANEL_LABELS[index]}`);
    const body = el('div', 'panel-body');
    body.innerHTML = renderBodyHtml(text.body);

    const controls = el('div', 'panel-controls');
    const bestBtn = el('button', 'pick-best', 'friendliest');
    bestBtn.type = 'button';
    bestBtn.addEventListener('click', () => onBest(index));
    const worstBtn = el('button', 'pick-worst', 'most offensive');
    worstBtn.type = 'button';
    worstBtn.addEventListener('click', () => onWorst(index));
    controls.append(bestBtn, worstBtn);

    panel.append(header, body, controls);
    grid.append(panel);
  });
  root.append(grid);
}

export function renderJudge(root: HTMLElement, flow: JudgeFlow, rerender: () => void): void {
  root.replaceChildren();

  if (flow.phase === 'done') {
    const done = el('div', 'done-screen');
    done.append(el('h2', undefined, 'All tuples annotated, thank you.'));
    const progress = flow.finalProgress;
    if (progress) {
      const kappa = progress.agreement_kappa;
      done.append(el('p', undefined,
        kappa === null
          ? 'Agreement with your partner appears once both of you finish.'
          : `Agreement with your partner (kappa): ${kappa.toFixed(3)}`));
      done.append(el('p', undefined,
        `${progress.completed_tuples}/${progress.total_tuples} tuples resolved, ` +
        `${progress.open_arbitrations} awaiting arbitration.`));
    }
    root.append(done);
    return;
  }

  if (!flow.current) return;

  const bar = el('div', 'progress-bar',
    `Round ${flow.current.round} - tuple ${flow.completed + 1} of ${flow.totalTuples}`);
  root.append(bar);

  renderPanels(root, flow.current, flow.selection,
    (panel) => { flow.selectBest(panel); rerender(); },
    (panel) => { flow.selectWorst(panel); rerender(); });

  if (flow.notice) {
    root.append(el('p', 'notice', flow.notice));
  }

  const submit = el('button', 'submit', 'Submit judgment');
  submit.type = 'button';
  submit.disabled = !flow.canSubmit();
  submit.addEventListener('click', () => {
    void flow.submit().then(rerender);
  });
  root.append(submit);
  root.append(el('p', 'hint',
    'Keys 1-4 mark the friendliest, Shift+1-4 the most offensive.'));
}

export function renderArbitrate(root: HTMLElement, flow: ArbitrateFlow, rerender: () => void): void {
  root.replaceChildren();

  if (flow.phase === 'empty') {
    root.append(el('h2', undefined, 'No conflicts waiting.'));
    root.append(el('p', undefined, `${flow.resolved} conflict(s) resolved this session.`));
    return;
  }

  if (!flow.current) return;

  root.append(el('div', 'progress-bar', `Conflict on tuple ${flow.current.tuple_id}`));

  const labelOf = (textId: string): string => {
    const index = flow.current!.texts.findIndex((t) => t.text_id === textId);
    return index >= 0 ? PANEL_LABELS[index]! : textId;
  };
  const conflictBox = el('div', 'conflict-box');
  flow.conflicting.forEach((judgment: JudgmentRecord) => {
    conflictBox.append(el('p', 'conflict-line',
      `${judgment.annotator_id}: best ${labelOf(judgment.best_id)}, ` +
      `worst ${labelOf(judgment.worst_id)}`));
  });
  root.append(conflictBox);

  renderPanels(root, flow.current, flow.selection,
    (panel) => { flow.selection.selectBest(panel); rerender(); },
    (panel) => { flow.selection.selectWorst(panel); rerender(); });

  if (flow.notice) {
    root.append(el('p', 'notice', flow.notice));
  }

  const submit = el('button', 'submit', 'Record final judgment');
  submit.type = 'button';
  submit.disabled = !flow.canSubmit();
  submit.addEventListener('click', () => {
    void flow.submit().then(rerender);
  });
  root.append(submit);
}

export function bindKeyboard(
  target: { addEventListener(type: 'keydown', cb: (ev: KeyboardEvent) => void): void },
  onAction: (kind: 'best' | 'worst', panel: number) => void,
): void {
  target.addEventListener('keydown', (event: KeyboardEvent) => {
    const action = shortcutAction(event.code || event.key, event.shiftKey || event.altKey);
    if (action) onAction(action.kind, action.panel);
  });
}
