import { ApiClient } from './api.js';
import { App, type EngineDraft } from './app.js';
import { renderApp, escapeHtml } from './render.js';
import type { AppState, Mode } from './state.js';
import type { CommentAnchor, Conversation, Enrichments, ReviewBatch } from './types.js';

// Browser shell: event wiring, local-storage persistence, the 1 s progress
// poll. Everything it stores stays in this browser; documents only ever
// travel to the configured backend.

const STORAGE_KEY = 'ragloop-ui-session';

interface StoredSession {
  baseUrl: string;
  principal: string;
  mode?: Mode;
  conversation?: Conversation | null;
  batch?: ReviewBatch | null;
  specText?: string;
}

const root = document.querySelector<HTMLDivElement>('#app')!;

function loadSession(): StoredSession | null {
  try {
    const raw = localStorage.getItem(STORAGE_KEY);
    return raw ? (JSON.parse(raw) as StoredSession) : null;
  } catch {
    return null;
  }
}

function saveSession(session: StoredSession): void {
  localStorage.setItem(STORAGE_KEY, JSON.stringify(session));
}

function renderConnectForm(message = ''): void {
  root.innerHTML = `<div class="connect">
    <h1>conversation studio</h1>
    ${message ? `<div class="banner error">${escapeHtml(message)}</div>` : ''}
    <form id="connect-form">
      <label>backend URL <input id="connect-url" value="http://127.0.0.1:8040"></label>
      <label>your email <input id="connect-email" placeholder="you@example.org"></label>
      <button type="submit">connect</button>
    </form>
  </div>`;
  document.getElementById('connect-form')!.addEventListener('submit', (event) => {
    event.preventDefault();
    const baseUrl = (document.getElementById('connect-url') as HTMLInputElement).value.replace(/\/$/, '');
    const principal = (document.getElementById('connect-email') as HTMLInputElement).value.trim();
    if (!baseUrl || !principal) return;
    boot({ baseUrl, principal });
  });
}

function inputValue(id: string): string {
  return (document.getElementById(id) as HTMLInputElement | null)?.value ?? '';
}

function readEnrichments(scope: string, turn: string): Enrichments {
  const out: Enrichments = {};
  const qt = inputValue(`${scope}-qt-${turn}`);
  const ans = inputValue(`${scope}-ans-${turn}`);
  const mt = inputValue(`${scope}-mt-${turn}`);
  if (qt) out.question_type = qt;
  if (ans) out.answerability = ans;
  if (mt) out.multi_turn = mt;
  return out;
}

function engineDraft(): EngineDraft {
  return {
    corpusId: inputValue('set-corpus') || 'wiki',
    topK: parseInt(inputValue('set-topk'), 10) || 5,
    queryStrategy: inputValue('set-strategy') || 'last_user_turn',
    generatorEngine: inputValue('set-engine') || 'mock_echo',
    modelId: inputValue('set-model') || 'echo-1',
    endpointUrl: inputValue('set-endpoint'),
    temperature: parseFloat(inputValue('set-temp')) || 0.0,
  };
}

function download(filename: string, text: string): void {
  const blob = new Blob([text], { type: 'application/json' });
  const url = URL.createObjectURL(blob);
  const link = document.createElement('a');
  link.href = url;
  link.download = filename;
  document.body.appendChild(link);
  link.click();
  document.body.removeChild(link);
  URL.revokeObjectURL(url);
}

function boot(session: StoredSession): void {
  const api = new ApiClient(session.baseUrl, session.principal);
  let pollTimer: number | null = null;
  let pendingAnchor: CommentAnchor | null = null;

  const app = new App(api, (state: AppState) => {
    root.innerHTML = renderApp(state);
    saveSession({
      baseUrl: session.baseUrl,
      principal: session.principal,
      mode: state.mode,
      conversation: state.create.conversation,
      batch: state.review.batch,
      specText: state.experiment.specText,
    });
    const fileInput = document.getElementById('spec-file') as HTMLInputElement | null;
    fileInput?.addEventListener('change', () => {
      const file = fileInput.files?.[0];
      if (!file) return;
      file.text().then((text) => app.setSpecText(text));
    });
    if (state.experiment.phase === 'running' && pollTimer === null) {
      pollTimer = window.setInterval(() => void app.pollExperiment(), 1000);
    } else if (state.experiment.phase !== 'running' && pollTimer !== null) {
      window.clearInterval(pollTimer);
      pollTimer = null;
    }
  });

  // Remember where a reviewer selected response text, for comment anchors.
  root.addEventListener('mouseup', () => {
    if (app.state.mode !== 'review') return;
    const selection = window.getSelection();
    if (!selection || selection.isCollapsed) return;
    const range = selection.getRangeAt(0);
    const holder = (range.startContainer.parentElement as HTMLElement | null)?.closest('[data-message]');
    if (!holder) return;
    pendingAnchor = {
      message_index: parseInt((holder as HTMLElement).dataset.message!, 10),
      start: range.startOffset,
      end: range.endOffset,
    };
  });

  root.addEventListener('submit', (event) => {
    const form = (event.target as HTMLElement).closest('[data-action="ask"]');
    if (!form) return;
    event.preventDefault();
    const question = inputValue('question').trim();
    if (question) void app.ask(question, engineDraft());
  });

  root.addEventListener('click', (event) => {
    const el = (event.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (!el) return;
    const action = el.dataset.action;
    const turn = parseInt(el.dataset.turn ?? '-1', 10);
    switch (action) {
      case 'mode':
        app.setMode(el.dataset.value as Mode);
        break;
      case 'create-relevance':
        void app.setRelevance(turn, parseInt(el.dataset.ordinal!, 10), el.dataset.value!);
        break;
      case 'create-enrich':
        void app.saveEnrichments(turn, readEnrichments('create', el.dataset.turn!));
        break;
      case 'pick-side-turn':
        app.pickSideTurn(turn);
        break;
      case 'side-search':
        void app.sideSearch(inputValue('side-query').trim());
        break;
      case 'add-passage':
        void app.addPassage(parseInt(el.dataset.hit!, 10));
        break;
      case 'regenerate':
        void app.regenerate(turn);
        break;
      case 'start-edit':
        app.startEdit(turn);
        break;
      case 'cancel-edit':
        app.cancelEdit();
        break;
      case 'save-edit':
        void app.saveEdit(turn, (document.getElementById('edit-draft') as HTMLTextAreaElement).value);
        break;
      case 'toggle-overlap':
        void app.toggleOverlap(turn);
        break;
      case 'open-export':
        void app.openExport([]);
        break;
      case 'confirm-export': {
        const acks = Array.from(root.querySelectorAll<HTMLInputElement>('input.ack')).map((b) => b.checked);
        void app.openExport(acks);
        break;
      }
      case 'download-conversation':
        download('conversation.json', app.state.create.exportDialog!.document);
        break;
      case 'close-export':
        app.closeExport();
        break;
      case 'load-batch':
        void app.loadBatch((document.getElementById('batch-input') as HTMLTextAreaElement).value);
        break;
      case 'goto':
        void app.goto(parseInt(el.dataset.item!, 10));
        break;
      case 'review-edit-question': {
        const text = window.prompt('New question text (the backend will refuse this):');
        if (text !== null) void app.tryEditQuestion(turn, text);
        break;
      }
      case 'review-start-edit': {
        const current = app.state.review.batch!.conversations[app.state.review.batch!.cursor];
        const text = window.prompt('Edit the response:', current.messages[turn].text);
        if (text !== null) void app.reviewEditResponse(turn, text);
        break;
      }
      case 'review-relevance':
        void app.reviewSetRelevance(turn, parseInt(el.dataset.ordinal!, 10), el.dataset.value!);
        break;
      case 'review-enrich':
        void app.reviewSetEnrichments(turn, readEnrichments('review', el.dataset.turn!));
        break;
      case 'add-comment': {
        const text = (document.getElementById('comment-text') as HTMLTextAreaElement).value.trim();
        if (text) {
          void app.comment(text, pendingAnchor ?? undefined);
          pendingAnchor = null;
        }
        break;
      }
      case 'decide':
        void app.decide(el.dataset.value as 'accept' | 'accept_with_edits' | 'reject');
        break;
      case 'export-batch':
        void app.exportBatch();
        break;
      case 'launch':
        app.setSpecText((document.getElementById('spec-text') as HTMLTextAreaElement).value);
        void app.launch();
        break;
      case 'fetch-result':
        void app.fetchResult();
        break;
      case 'download-result':
        download('experiment-results.json', app.state.experiment.result ?? '');
        break;
      default:
        break;
    }
  });

  app.hydrate({
    mode: session.mode,
    conversation: session.conversation ?? null,
    batch: session.batch ?? null,
    specText: session.specText ?? '',
  });
}

const saved = loadSession();
if (saved && saved.baseUrl && saved.principal) {
  boot(saved);
} else {
  renderConnectForm();
}
