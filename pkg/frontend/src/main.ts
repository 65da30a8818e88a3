/** Entry point: read connection details, open a session, run the right flow. */

import { ApiClient } from './api.js';
import { ArbitrateFlow, JudgeFlow } from './state.js';
import { bindKeyboard, renderArbitrate, renderJudge } from './view.js';

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function boot(): Promise<void> {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app element');

  const baseUrl = param('service', window.location.origin);
  const token = param('token', '') || window.prompt('Annotator token?') || '';
  if (!token) {
    root.textContent = 'A bearer token is required (pass ?token=... or enter one).';
    return;
  }
  const api = new ApiClient(baseUrl, token);
  const round = Number(param('round', '1'));

  try {
    const session = await api.createSession(round);
    if (session.role === 'arbiter') {
      const flow = new ArbitrateFlow(api);
      const rerender = (): void => renderArbitrate(root, flow, rerender);
      await flow.advance();
      rerender();
      return;
    }
    const judge = new JudgeFlow(api, window.localStorage);
    // the session created above is only a role probe; the flow opens its own
    const rerender = (): void => renderJudge(root, judge, rerender);
    bindKeyboard(window, (kind, panel) => {
      if (kind === 'best') judge.selectBest(panel);
      else judge.selectWorst(panel);
      rerender();
    });
    await judge.start(round);
    rerender();
  } catch (err) {
    root.textContent = `Cannot reach the annotation service: ${String(err)}`;
  }
}

void boot();
