import { ApiClient, ApiError } from './api.js';
import type { CommentAnchor, Conversation, Decision, Enrichments } from './types.js';
import * as reduce from './state.js';
import type { AppState, Mode } from './state.js';

/**
 * All behavior behind the screens, with no DOM in sight. Each method runs
 * one user intention: it calls the backend, folds the reply into the state
 * through the reducers, and notifies the subscriber. The browser entry
 * point subscribes with a render callback; tests subscribe with nothing
 * and drive the methods directly.
 */

export interface EngineDraft {
  corpusId: string;
  topK: number;
  queryStrategy: string;
  generatorEngine: string;
  modelId: string;
  endpointUrl: string;
  temperature: number;
}

// Error codes the review screen explains inline instead of as a failure.
const REVIEW_CONSTRAINTS = new Set([
  'constraint_violation',
  'item_not_visited',
  'missing_edits',
  'missing_reject_comment',
  'anchor_out_of_range',
  'empty_comment',
]);

export class App {
  state: AppState;

  constructor(
    readonly api: ApiClient,
    private readonly onChange: (state: AppState) => void = () => {},
  ) {
    this.state = reduce.initialState();
  }

  private update(state: AppState): void {
    this.state = state;
    this.onChange(state);
  }

  private async run(work: () => Promise<void>, scope: 'general' | 'review' = 'general'): Promise<boolean> {
    this.update(reduce.setBusy(reduce.setError(this.state, null), true));
    try {
      await work();
      return true;
    } catch (err) {
      if (err instanceof ApiError) {
        if (scope === 'review' && REVIEW_CONSTRAINTS.has(err.code)) {
          const label = err.payload.action ? `${err.payload.action}: ${err.message}` : err.message;
          this.update(reduce.setConstraint(this.state, label));
        } else {
          this.update(reduce.setError(this.state, { httpStatus: err.httpStatus, ...err.payload }));
        }
      } else {
        this.update(
          reduce.setError(this.state, {
            httpStatus: 0,
            code: 'unreachable',
            message: String(err),
            path: null,
          }),
        );
      }
      return false;
    } finally {
      this.update(reduce.setBusy(this.state, false));
    }
  }

  setMode(mode: Mode): void {
    this.update(reduce.setMode(this.state, mode));
  }

  /** Restore client-held documents saved by the shell (local storage). */
  hydrate(saved: {
    mode?: Mode;
    conversation?: Conversation | null;
    batch?: import('./types.js').ReviewBatch | null;
    specText?: string;
  }): void {
    let state = this.state;
    if (saved.conversation) state = reduce.setConversation(state, saved.conversation);
    if (saved.batch) state = reduce.setBatch(state, saved.batch);
    if (saved.specText) state = reduce.setSpecText(state, saved.specText);
    if (saved.mode) state = reduce.setMode(state, saved.mode);
    this.update(state);
  }

  // ----------------------------------------------------------- create mode

  /** The empty document a new conversation starts from, authored by us. */
  newConversation(draft: EngineDraft): Conversation {
    return {
      participants: { author: this.api.principal, editors: [], reviewers: [], accessed_at: [] },
      retriever: {
        engine: 'embedded_bm25',
        corpus_id: draft.corpusId,
        top_k: draft.topK,
        query_strategy: draft.queryStrategy,
        bm25_k1: 1.2,
        bm25_b: 0.75,
      },
      generator: {
        engine: draft.generatorEngine,
        model_id: draft.modelId,
        prompt_template: '{system}\n\n{passages}\n{history}\nuser: {question}\nagent:',
        system_prompt:
          "You are a helpful assistant. Answer the user's question using only the " +
          'provided passages. If the passages do not contain the answer, say so.',
        passage_template: '[{n}] {title}\n{text}\n',
        decoding: { temperature: draft.temperature, top_p: 1.0, max_tokens: 1024 },
        timeout_s: 120.0,
        ...(draft.generatorEngine === 'remote_chat'
          ? { endpoint: { url: draft.endpointUrl, auth_token_env: 'GENERATOR_TOKEN' } }
          : {}),
      },
      messages: [],
      status: { state: 'draft', revisions: [], comments: [] },
    };
  }

  private conversation(): Conversation {
    const conv = this.state.create.conversation;
    if (!conv) throw new Error('no active conversation');
    return conv;
  }

  private async refreshHints(): Promise<void> {
    const { hints } = await this.api.hints(this.conversation());
    this.update(reduce.setHints(this.state, hints));
  }

  /** Submit the pending question: one chat/turn call, then fresh hints. */
  async ask(questionText: string, draft?: EngineDraft): Promise<boolean> {
    return this.run(async () => {
      const conv = this.state.create.conversation ?? this.newConversation(draft!);
      const result = await this.api.chatTurn(conv, questionText);
      this.update(reduce.setQuestion(reduce.setConversation(this.state, result.conversation), ''));
      await this.refreshHints();
    });
  }

  async setRelevance(turnIndex: number, contextOrdinal: number, relevance: string): Promise<boolean> {
    return this.run(async () => {
      const { conversation } = await this.api.editConversation(this.conversation(), {
        kind: 'relevance',
        turn_index: turnIndex,
        context_ordinal: contextOrdinal,
        relevance,
      });
      this.update(reduce.setConversation(this.state, conversation));
      await this.refreshHints();
    });
  }

  async saveEnrichments(turnIndex: number, enrichments: Enrichments): Promise<boolean> {
    return this.run(async () => {
      const { conversation } = await this.api.editConversation(this.conversation(), {
        kind: 'enrichments',
        turn_index: turnIndex,
        enrichments,
      });
      this.update(reduce.setConversation(this.state, conversation));
      await this.refreshHints();
    });
  }

  pickSideTurn(turnIndex: number): void {
    this.update(
      reduce.setSideSearch(this.state, this.state.create.sideQuery, this.state.create.sideHits, turnIndex),
    );
  }

  async sideSearch(query: string): Promise<boolean> {
    return this.run(async () => {
      const { hits } = await this.api.search(this.conversation().retriever, query);
      this.update(reduce.setSideSearch(this.state, query, hits, this.state.create.sideTurn));
    });
  }

  /** Attach a side-search hit to the chosen agent turn as a searched passage. */
  async addPassage(hitIndex: number): Promise<boolean> {
    return this.run(async () => {
      const { sideHits, sideTurn } = this.state.create;
      if (sideTurn === null) throw new Error('pick a turn to add passages to');
      const { conversation } = await this.api.editConversation(this.conversation(), {
        kind: 'add_passage',
        turn_index: sideTurn,
        hit: sideHits[hitIndex],
      });
      this.update(reduce.setConversation(this.state, conversation));
    });
  }

  async regenerate(turnIndex: number): Promise<boolean> {
    return this.run(async () => {
      const { conversation } = await this.api.regenerate(this.conversation(), turnIndex);
      this.update(reduce.setConversation(this.state, conversation));
    });
  }

  startEdit(turnIndex: number): void {
    const message = this.conversation().messages[turnIndex];
    this.update(reduce.startEdit(this.state, turnIndex, message.text));
  }

  cancelEdit(): void {
    this.update({ ...this.state, create: { ...this.state.create, edit: null } });
  }

  /**
   * Persist a response edit, then fetch the word diff between the original
   * generation and the stored text so the screen can show what changed.
   */
  async saveEdit(turnIndex: number, text: string): Promise<boolean> {
    return this.run(async () => {
      const { conversation } = await this.api.editConversation(this.conversation(), {
        kind: 'response',
        turn_index: turnIndex,
        text,
      });
      const message = conversation.messages[turnIndex];
      const { segments } = await this.api.diff(message.original_text ?? message.text, message.text);
      this.update(reduce.setDiff(reduce.setConversation(this.state, conversation), turnIndex, segments));
    });
  }

  async toggleOverlap(turnIndex: number): Promise<boolean> {
    const active = this.state.create.overlap;
    if (active && active.turnIndex === turnIndex) {
      this.update(reduce.setOverlap(this.state, null));
      return true;
    }
    return this.run(async () => {
      const message = this.conversation().messages[turnIndex];
      const { spans } = await this.api.overlap(message.text, message.contexts ?? []);
      this.update(reduce.setOverlap(this.state, { turnIndex, spans }));
    });
  }

  async openExport(acknowledgements: boolean[] = []): Promise<boolean> {
    return this.run(async () => {
      const result = await this.api.exportConversation(this.conversation(), acknowledgements);
      this.update(reduce.setExportDialog(this.state, result));
    });
  }

  closeExport(): void {
    this.update(reduce.setExportDialog(this.state, null));
  }

  // ----------------------------------------------------------- review mode

  /** Accept a pasted batch: a JSON array or an exported batch object. */
  async loadBatch(rawText: string): Promise<boolean> {
    return this.run(async () => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(rawText);
      } catch (err) {
        throw new ApiError(400, {
          code: 'malformed_document',
          message: `batch is not valid JSON: ${String(err)}`,
          path: null,
        });
      }
      const conversations = Array.isArray(parsed)
        ? parsed
        : ((parsed as Record<string, unknown>)?.conversations as unknown[]);
      const batch = await this.api.reviewValidate(conversations ?? []);
      this.update(reduce.setBatch(this.state, batch));
    });
  }

  private batch() {
    const batch = this.state.review.batch;
    if (!batch) throw new Error('no batch loaded');
    return batch;
  }

  async goto(item: number): Promise<boolean> {
    return this.run(async () => {
      this.update(reduce.setBatch(this.state, await this.api.reviewGoto(this.batch(), item)));
    }, 'review');
  }

  /** Always refused by the backend; surfaces the constraint explanation. */
  async tryEditQuestion(turnIndex: number, text: string): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewEdit(this.batch(), this.batch().cursor, {
        kind: 'question',
        turn_index: turnIndex,
        text,
      });
      this.update(reduce.setBatch(this.state, batch));
    }, 'review');
  }

  async reviewEditResponse(turnIndex: number, text: string): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewEdit(this.batch(), this.batch().cursor, {
        kind: 'response',
        turn_index: turnIndex,
        text,
      });
      this.update(reduce.setBatch(this.state, batch));
    }, 'review');
  }

  async reviewSetRelevance(turnIndex: number, contextOrdinal: number, relevance: string): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewEdit(this.batch(), this.batch().cursor, {
        kind: 'relevance',
        turn_index: turnIndex,
        context_ordinal: contextOrdinal,
        relevance,
      });
      this.update(reduce.setBatch(this.state, batch));
    }, 'review');
  }

  async reviewSetEnrichments(turnIndex: number, enrichments: Enrichments): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewEdit(this.batch(), this.batch().cursor, {
        kind: 'enrichments',
        turn_index: turnIndex,
        enrichments,
      });
      this.update(reduce.setBatch(this.state, batch));
    }, 'review');
  }

  async comment(text: string, anchor?: CommentAnchor): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewComment(this.batch(), this.batch().cursor, text, anchor);
      this.update(reduce.setCommentDraft(reduce.setBatch(this.state, batch), ''));
    }, 'review');
  }

  async decide(decision: Decision): Promise<boolean> {
    return this.run(async () => {
      const batch = await this.api.reviewDecide(this.batch(), this.batch().cursor, decision);
      this.update(reduce.setBatch(this.state, batch));
    }, 'review');
  }

  async exportBatch(): Promise<boolean> {
    return this.run(async () => {
      const { document } = await this.api.reviewExport(this.batch());
      this.update(reduce.setReviewExport(this.state, document));
    }, 'review');
  }

  // ------------------------------------------------------- experiment mode

  setSpecText(text: string): void {
    this.update(reduce.setSpecText(this.state, text));
  }

  /**
   * Submit the spec. Oversized or malformed specs fail here, before any
   * task starts, and the error stays on screen with the experiment idle.
   */
  async launch(): Promise<boolean> {
    return this.run(async () => {
      let spec: unknown;
      try {
        spec = JSON.parse(this.state.experiment.specText);
      } catch (err) {
        throw new ApiError(400, {
          code: 'malformed_document',
          message: `spec is not valid JSON: ${String(err)}`,
          path: null,
        });
      }
      const { experiment_id, total } = await this.api.submitExperiment(spec);
      this.update(reduce.launchExperiment(this.state, experiment_id, total));
    });
  }

  /** One poll; the browser shell calls this on a one second interval. */
  async pollExperiment(): Promise<boolean> {
    const id = this.state.experiment.experimentId;
    if (!id || this.state.experiment.phase !== 'running') return true;
    return this.run(async () => {
      const snapshot = await this.api.experimentState(id);
      this.update(reduce.recordSnapshot(this.state, snapshot));
    });
  }

  async fetchResult(): Promise<boolean> {
    const id = this.state.experiment.experimentId;
    if (!id) return false;
    return this.run(async () => {
      const text = await this.api.experimentResult(id);
      this.update(reduce.setExperimentResult(this.state, text));
    });
  }
}
