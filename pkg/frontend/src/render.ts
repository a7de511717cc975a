import type {
  Checklist,
  Conversation,
  ContextPassage,
  DiffSegment,
  Message,
  OverlapSpan,
} from './types.js';
import type { AppState, CreateState, ErrorInfo, ExperimentState, ReviewState } from './state.js';
import { allDecided, canAcceptWithEdits, canReject, currentItem } from './state.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

const QUESTION_TYPES = ['factoid', 'opinion', 'comparison', 'keyword', 'composite', 'other'];
const ANSWERABILITY = ['answerable', 'unanswerable', 'partial'];
const MULTI_TURN = ['clarification', 'follow_up', 'topic_switch', 'none'];
const QUERY_STRATEGIES = ['last_user_turn', 'concat_user_turns', 'full_history', 'manual'];

function option(value: string, selected: string | undefined): string {
  const sel = value === selected ? ' selected' : '';
  return `<option value="${escapeHtml(value)}"${sel}>${escapeHtml(value)}</option>`;
}

function select(id: string, values: string[], selected: string | undefined, blank = true): string {
  const blankOpt = blank ? `<option value=""${selected ? '' : ' selected'}></option>` : '';
  return `<select id="${id}" data-action="change">${blankOpt}${values
    .map((v) => option(v, selected))
    .join('')}</select>`;
}

export function renderError(error: ErrorInfo): string {
  const path = error.path ? ` at <code>${escapeHtml(error.path)}</code>` : '';
  const count = error.count !== undefined ? ` (${error.count} tasks)` : '';
  return `<div class="banner error" data-testid="error">
    <strong>${escapeHtml(error.code)}</strong>${path}: ${escapeHtml(error.message)}${count}
  </div>`;
}

/** Word diff as backend segments; insertions and deletions get styled spans. */
export function renderDiffSegments(segments: DiffSegment[]): string {
  return segments
    .map((segment) => {
      const cls = segment.kind === 'insert' ? 'diff-ins' : segment.kind === 'delete' ? 'diff-del' : 'diff-eq';
      return `<span class="${cls}">${escapeHtml(segment.tokens.join(' '))}</span>`;
    })
    .join(' ');
}

/**
 * Response text with backend-computed overlap spans wrapped in <mark>.
 * Spans arrive sorted and non-overlapping; each is a [start, end) character
 * interval into the raw response string.
 */
export function renderOverlapText(text: string, spans: OverlapSpan[]): string {
  const parts: string[] = [];
  let at = 0;
  for (const span of spans) {
    parts.push(escapeHtml(text.slice(at, span.response_start)));
    const title = `passage ${span.passage_index}, ${span.length_tokens} tokens`;
    parts.push(
      `<mark title="${escapeHtml(title)}">${escapeHtml(text.slice(span.response_start, span.response_end))}</mark>`,
    );
    at = span.response_end;
  }
  parts.push(escapeHtml(text.slice(at)));
  return parts.join('');
}

function renderContexts(contexts: ContextPassage[], turnIndex: number, scope: 'create' | 'review'): string {
  if (contexts.length === 0) return '<p class="empty">no contexts</p>';
  const rows = contexts.map((ctx, ordinal) => {
    const buttons = ['relevant', 'irrelevant', 'unmarked']
      .map((value) => {
        const active = ctx.relevance === value ? ' active' : '';
        return `<button class="chip${active}" data-action="${scope}-relevance" data-turn="${turnIndex}" data-ordinal="${ordinal}" data-value="${value}">${value}</button>`;
      })
      .join('');
    return `<li class="context ${escapeHtml(ctx.relevance)}">
      <div class="context-head">
        <span class="doc-id">${escapeHtml(ctx.document_id)} / ${escapeHtml(ctx.passage_id)}</span>
        <span class="source">${escapeHtml(ctx.source)}</span>
        <span class="score">${ctx.score.toFixed(3)}</span>
      </div>
      <p>${escapeHtml(ctx.text)}</p>
      <div class="relevance">${buttons}</div>
    </li>`;
  });
  return `<ul class="contexts">${rows.join('')}</ul>`;
}

function renderEnrichmentControls(message: Message, turnIndex: number, scope: 'create' | 'review'): string {
  const e = message.enrichments ?? {};
  return `<div class="enrichments" data-turn="${turnIndex}">
    <label>type ${select(`${scope}-qt-${turnIndex}`, QUESTION_TYPES, e.question_type)}</label>
    <label>answerability ${select(`${scope}-ans-${turnIndex}`, ANSWERABILITY, e.answerability)}</label>
    <label>multi-turn ${select(`${scope}-mt-${turnIndex}`, MULTI_TURN, e.multi_turn)}</label>
    <button data-action="${scope}-enrich" data-turn="${turnIndex}">save labels</button>
  </div>`;
}

function renderAgentText(message: Message, turnIndex: number, create: CreateState): string {
  if (create.edit && create.edit.turnIndex === turnIndex) {
    return `<textarea id="edit-draft" rows="4">${escapeHtml(create.edit.draft)}</textarea>
      <button data-action="save-edit" data-turn="${turnIndex}">save edit</button>
      <button data-action="cancel-edit">cancel</button>`;
  }
  if (create.overlap && create.overlap.turnIndex === turnIndex) {
    return `<p class="agent-text" data-testid="overlap-text">${renderOverlapText(message.text, create.overlap.spans)}</p>`;
  }
  return `<p class="agent-text">${escapeHtml(message.text)}</p>`;
}

function renderMessage(message: Message, turnIndex: number, create: CreateState): string {
  if (message.speaker === 'user') {
    return `<div class="msg user" data-turn="${turnIndex}">
      <div class="speaker">user</div>
      <p>${escapeHtml(message.text)}</p>
      ${renderEnrichmentControls(message, turnIndex, 'create')}
    </div>`;
  }
  const diff =
    create.diff && create.diff.turnIndex === turnIndex
      ? `<div class="diff" data-testid="diff">${renderDiffSegments(create.diff.segments)}</div>`
      : '';
  return `<div class="msg agent" data-turn="${turnIndex}">
    <div class="speaker">agent${message.original_text !== undefined ? ' (edited)' : ''}</div>
    ${renderAgentText(message, turnIndex, create)}
    ${diff}
    <div class="turn-actions">
      <button data-action="start-edit" data-turn="${turnIndex}">edit</button>
      <button data-action="regenerate" data-turn="${turnIndex}">regenerate</button>
      <button data-action="toggle-overlap" data-turn="${turnIndex}">overlap</button>
      <button data-action="pick-side-turn" data-turn="${turnIndex}">add passages here</button>
    </div>
    ${renderContexts(message.contexts ?? [], turnIndex, 'create')}
  </div>`;
}

function renderChecklistDialog(dialog: { document: string; checklist: Checklist }): string {
  const items = dialog.checklist.items
    .map(
      (item, i) => `<li>
        <label><input type="checkbox" class="ack" data-index="${i}"${item.checked ? ' checked' : ''}>
        ${escapeHtml(item.label)}</label>
      </li>`,
    )
    .join('');
  const stats = dialog.checklist.statistics;
  return `<div class="overlay" data-testid="export-dialog">
    <div class="dialog">
      <h3>Export conversation</h3>
      <ul class="checklist">${items}</ul>
      <dl class="stats">
        <dt>turns</dt><dd>${stats.turn_count}</dd>
        <dt>enrichment coverage</dt><dd>${(stats.enrichment_coverage * 100).toFixed(0)}%</dd>
        <dt>relevant context coverage</dt><dd>${(stats.relevant_context_coverage * 100).toFixed(0)}%</dd>
        <dt>edited responses</dt><dd>${stats.edited_response_count}</dd>
      </dl>
      <button data-action="confirm-export">re-export with checked items</button>
      <button data-action="download-conversation">download</button>
      <button data-action="close-export">close</button>
    </div>
  </div>`;
}

function renderSettingsPanel(create: CreateState): string {
  if (create.conversation) {
    const r = create.conversation.retriever;
    const g = create.conversation.generator;
    return `<aside class="settings">
      <h3>Settings</h3>
      <p class="hintline">Settings are fixed once the conversation starts.</p>
      <dl>
        <dt>retriever</dt><dd>${escapeHtml(r.engine)} on ${escapeHtml(r.corpus_id)}, top ${r.top_k}</dd>
        <dt>query strategy</dt><dd>${escapeHtml(r.query_strategy)}</dd>
        <dt>generator</dt><dd>${escapeHtml(g.engine)} ${escapeHtml(g.model_id)}</dd>
        <dt>decoding</dt><dd>T=${g.decoding.temperature} p=${g.decoding.top_p} max=${g.decoding.max_tokens}</dd>
      </dl>
    </aside>`;
  }
  return `<aside class="settings">
    <h3>New conversation</h3>
    <label>corpus <input id="set-corpus" value="wiki"></label>
    <label>top k <input id="set-topk" type="number" value="5" min="1"></label>
    <label>query strategy ${select('set-strategy', QUERY_STRATEGIES, 'last_user_turn', false)}</label>
    <label>generator engine ${select('set-engine', ['mock_echo', 'remote_chat'], 'mock_echo', false)}</label>
    <label>model <input id="set-model" value="echo-1"></label>
    <label>endpoint <input id="set-endpoint" placeholder="http://... (remote_chat only)"></label>
    <label>temperature <input id="set-temp" type="number" step="0.1" value="0.0"></label>
  </aside>`;
}

function renderSidePanel(create: CreateState): string {
  const hits = create.sideHits
    .map(
      (hit, i) => `<li>
        <span class="doc-id">${escapeHtml(hit.document_id)} / ${escapeHtml(hit.passage_id)}</span>
        <p>${escapeHtml(hit.text)}</p>
        <button data-action="add-passage" data-hit="${i}">add to turn ${create.sideTurn ?? '?'}</button>
      </li>`,
    )
    .join('');
  return `<section class="side-search">
    <h3>Side search${create.sideTurn !== null ? ` (turn ${create.sideTurn})` : ''}</h3>
    <input id="side-query" value="${escapeHtml(create.sideQuery)}" placeholder="search the corpus">
    <button data-action="side-search">search</button>
    <ul class="hits">${hits}</ul>
  </section>`;
}

export function renderCreate(create: CreateState): string {
  const hintBanner = create.hints.length
    ? `<div class="banner hints" data-testid="hints">${create.hints
        .map((h) => `<span>turn ${h.message_index}: ${escapeHtml(h.text)}</span>`)
        .join('<br>')}</div>`
    : '';
  const messages = create.conversation
    ? create.conversation.messages.map((m, i) => renderMessage(m, i, create)).join('')
    : '<p class="empty">Configure the engines and ask the first question.</p>';
  const exportButton = create.conversation
    ? '<button data-action="open-export">export...</button>'
    : '';
  const dialog = create.exportDialog ? renderChecklistDialog(create.exportDialog) : '';
  return `${hintBanner}
  <div class="create-grid">
    <main class="chat">
      ${messages}
      <form data-action="ask">
        <input id="question" value="${escapeHtml(create.question)}" placeholder="ask a question">
        <button type="submit">send</button>
        ${exportButton}
      </form>
    </main>
    <div class="rail">
      ${renderSettingsPanel(create)}
      ${renderSidePanel(create)}
    </div>
  </div>
  ${dialog}`;
}

function renderReviewMessage(message: Message, turnIndex: number): string {
  if (message.speaker === 'user') {
    return `<div class="msg user" data-turn="${turnIndex}">
      <div class="speaker">user</div>
      <p data-message="${turnIndex}">${escapeHtml(message.text)}</p>
      <div class="turn-actions">
        <button data-action="review-edit-question" data-turn="${turnIndex}">edit question</button>
      </div>
      ${renderEnrichmentControls(message, turnIndex, 'review')}
    </div>`;
  }
  return `<div class="msg agent" data-turn="${turnIndex}">
    <div class="speaker">agent</div>
    <p data-message="${turnIndex}">${escapeHtml(message.text)}</p>
    <div class="turn-actions">
      <button data-action="review-start-edit" data-turn="${turnIndex}">edit response</button>
    </div>
    ${renderContexts(message.contexts ?? [], turnIndex, 'review')}
  </div>`;
}

function renderCommentRail(conversation: Conversation): string {
  const comments = conversation.status.comments
    .map((c) => {
      const anchor = c.anchor
        ? `<span class="anchor">turn ${c.anchor.message_index} [${c.anchor.start}:${c.anchor.end}]</span>`
        : '';
      return `<li><strong>${escapeHtml(c.author)}</strong> ${anchor}<p>${escapeHtml(c.text)}</p></li>`;
    })
    .join('');
  return `<aside class="comments">
    <h3>Comments</h3>
    <ul>${comments || '<li class="empty">none yet</li>'}</ul>
    <textarea id="comment-text" placeholder="select response text to anchor, then comment"></textarea>
    <button data-action="add-comment">comment</button>
  </aside>`;
}

export function renderReview(review: ReviewState): string {
  if (!review.batch) {
    return `<div class="review-load">
      <p>Paste an exported batch or a JSON array of conversations to review.</p>
      <textarea id="batch-input" rows="8"></textarea>
      <button data-action="load-batch">load batch</button>
    </div>`;
  }
  const batch = review.batch;
  const conversation = currentItem(batch);
  const constraint = review.constraint
    ? `<div class="banner constraint" data-testid="constraint">${escapeHtml(review.constraint)}</div>`
    : '';
  const nav = batch.conversations
    .map((_, i) => {
      const mark = batch.decisions[i] ?? (batch.visited.includes(i) ? 'visited' : 'unseen');
      const current = i === batch.cursor ? ' current' : '';
      return `<button class="nav-item${current}" data-action="goto" data-item="${i}">#${i} ${mark}</button>`;
    })
    .join('');
  const rejectOk = canReject(batch);
  const editsOk = canAcceptWithEdits(batch);
  const exported = review.exported
    ? `<textarea id="batch-output" rows="6" readonly data-testid="batch-export">${escapeHtml(review.exported)}</textarea>`
    : '';
  return `${constraint}
  <div class="review-grid">
    ${renderCommentRail(conversation)}
    <main class="reading">
      <nav class="batch-nav">${nav}</nav>
      ${conversation.messages.map((m, i) => renderReviewMessage(m, i)).join('')}
      <div class="decisions">
        <button data-action="decide" data-value="accept">accept</button>
        <button data-action="decide" data-value="accept_with_edits"${editsOk ? '' : ' disabled title="requires an edit by the reviewer"'}>accept with edits</button>
        <button data-action="decide" data-value="reject"${rejectOk ? '' : ' disabled title="add a comment first"'}>reject</button>
        <button data-action="export-batch"${allDecided(batch) ? '' : ' disabled title="decide every item first"'}>export batch</button>
      </div>
      ${exported}
    </main>
  </div>`;
}

export function renderExperiment(experiment: ExperimentState): string {
  const progress = experiment.progress;
  const percent = progress && progress.total > 0 ? Math.round((100 * progress.done) / progress.total) : 0;
  const bar =
    experiment.phase === 'idle'
      ? ''
      : `<div class="progress" data-testid="progress">
          <div class="bar" style="width: ${percent}%"></div>
          <span>${progress ? `${progress.done}/${progress.total}` : ''} done, ${progress?.failed ?? 0} failed (${escapeHtml(experiment.phase)})</span>
        </div>`;
  const failure = experiment.failure
    ? `<div class="banner error">${escapeHtml(experiment.failure)}</div>`
    : '';
  const result =
    experiment.phase === 'done'
      ? `<button data-action="fetch-result">fetch result</button>
         ${experiment.result ? `<button data-action="download-result">download</button><pre class="result" data-testid="result">${escapeHtml(experiment.result.slice(0, 2000))}</pre>` : ''}`
      : '';
  return `<div class="experiment">
    <h3>Experiment</h3>
    <p>Paste or upload a spec: conversations, split, mode, systems, metrics.</p>
    <input type="file" id="spec-file" accept="application/json">
    <textarea id="spec-text" rows="8" placeholder="{ ... }">${escapeHtml(experiment.specText)}</textarea>
    <button data-action="launch"${experiment.phase === 'running' ? ' disabled' : ''}>launch</button>
    ${bar}
    ${failure}
    ${result}
  </div>`;
}

export function renderApp(state: AppState): string {
  const tabs = (['create', 'review', 'experiment'] as const)
    .map(
      (mode) =>
        `<button class="tab${state.mode === mode ? ' active' : ''}" data-action="mode" data-value="${mode}">${mode}</button>`,
    )
    .join('');
  const body =
    state.mode === 'create'
      ? renderCreate(state.create)
      : state.mode === 'review'
        ? renderReview(state.review)
        : renderExperiment(state.experiment);
  return `<header>
    <h1>conversation studio</h1>
    <nav>${tabs}</nav>
    ${state.busy ? '<span class="busy" data-testid="busy">working...</span>' : ''}
  </header>
  ${state.error ? renderError(state.error) : ''}
  <div class="mode-body">${body}</div>`;
}
