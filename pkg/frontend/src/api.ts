import type {
  ChatTurnResult,
  Conversation,
  ContextPassage,
  Decision,
  EditRequest,
  ExperimentSnapshot,
  ExportResult,
  CommentAnchor,
  CorpusStats,
  DiffSegment,
  GenerationResult,
  GeneratorConfig,
  Hint,
  OverlapSpan,
  RetrieverConfig,
  ReviewBatch,
  SearchHit,
  ValidationEntry,
} from './types.js';

/** Structured error body returned by every failing backend route. */
export interface ApiErrorPayload {
  code: string;
  message: string;
  path: string | null;
  action?: string;
  indices?: number[];
  count?: number;
  item_index?: number;
  status?: number;
}

export class ApiError extends Error {
  constructor(
    readonly httpStatus: number,
    readonly payload: ApiErrorPayload,
  ) {
    super(payload.message);
    this.name = 'ApiError';
  }

  get code(): string {
    return this.payload.code;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client over the backend's HTTP routes. Documents and review
 * batches travel inside request bodies; the client holds no server state
 * beyond the base URL and the annotator identity it attaches to requests.
 */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly principal: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    readonly principalHeader: string = 'x-annotator-email',
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers['content-type'] = 'application/json';
    if (this.principal) headers[this.principalHeader] = this.principal;
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let payload: ApiErrorPayload;
      try {
        payload = (await response.json()) as ApiErrorPayload;
      } catch {
        payload = { code: 'unreachable', message: `HTTP ${response.status}`, path: null };
      }
      throw new ApiError(response.status, payload);
    }
    return response;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    return (await this.request('POST', path, body)).json() as Promise<T>;
  }

  private async get<T>(path: string): Promise<T> {
    return (await this.request('GET', path)).json() as Promise<T>;
  }

  health(): Promise<{ status: string }> {
    return this.get('/api/health');
  }

  ingestCorpus(
    corpusId: string,
    documentsJsonl: string,
    chunking?: { max_tokens?: number; overlap?: number },
  ): Promise<CorpusStats> {
    return this.post('/api/corpora', {
      corpus_id: corpusId,
      documents_jsonl: documentsJsonl,
      ...chunking,
    });
  }

  listCorpora(): Promise<{ corpora: CorpusStats[] }> {
    return this.get('/api/corpora');
  }

  search(retriever: RetrieverConfig, query: string, topK?: number): Promise<{ hits: SearchHit[] }> {
    return this.post('/api/search', { retriever, query, top_k: topK });
  }

  generate(generator: GeneratorConfig, prompt: string): Promise<{ result: GenerationResult; prompt: string }> {
    return this.post('/api/generate', { generator, prompt });
  }

  chatTurn(conversation: Conversation, userText?: string, manualQuery?: string): Promise<ChatTurnResult> {
    return this.post('/api/chat/turn', {
      conversation,
      user_text: userText,
      manual_query: manualQuery,
    });
  }

  regenerate(conversation: Conversation, turnIndex: number): Promise<{ conversation: Conversation; response: GenerationResult }> {
    return this.post('/api/chat/regenerate', { conversation, turn_index: turnIndex });
  }

  validate(conversation: Conversation): Promise<{ clean: boolean; entries: ValidationEntry[] }> {
    return this.post('/api/conversations/validate', { conversation });
  }

  hints(conversation: Conversation): Promise<{ hints: Hint[] }> {
    return this.post('/api/conversations/hints', { conversation });
  }

  editConversation(conversation: Conversation, edit: EditRequest): Promise<{ conversation: Conversation }> {
    return this.post('/api/conversations/edit', { conversation, edit });
  }

  exportConversation(conversation: Conversation, acknowledgements: boolean[]): Promise<ExportResult> {
    return this.post('/api/conversations/export', { conversation, acknowledgements });
  }

  diff(original: string, edited: string): Promise<{ segments: DiffSegment[] }> {
    return this.post('/api/diff', { original, edited });
  }

  overlap(response: string, passages: ContextPassage[], minNgram?: number): Promise<{ spans: OverlapSpan[] }> {
    return this.post('/api/overlap', { response, passages, min_ngram: minNgram });
  }

  reviewValidate(conversations: unknown[]): Promise<ReviewBatch> {
    return this.post('/api/review/batch/validate', { batch: conversations });
  }

  reviewGoto(batch: ReviewBatch, item: number): Promise<ReviewBatch> {
    return this.post('/api/review/goto', { batch, item });
  }

  reviewEdit(batch: ReviewBatch, item: number, edit: EditRequest | { kind: 'question'; turn_index: number; text: string }): Promise<ReviewBatch> {
    return this.post('/api/review/edit', { batch, item, edit });
  }

  reviewComment(batch: ReviewBatch, item: number, text: string, anchor?: CommentAnchor): Promise<ReviewBatch> {
    return this.post('/api/review/comment', { batch, item, text, anchor });
  }

  reviewDecide(batch: ReviewBatch, item: number, decision: Decision): Promise<ReviewBatch> {
    return this.post('/api/review/decide', { batch, item, decision });
  }

  reviewExport(batch: ReviewBatch): Promise<{ document: string }> {
    return this.post('/api/review/export', { batch });
  }

  submitExperiment(spec: unknown): Promise<{ experiment_id: string; total: number }> {
    return this.post('/api/experiments', spec);
  }

  experimentState(experimentId: string): Promise<ExperimentSnapshot> {
    return this.get(`/api/experiments/${encodeURIComponent(experimentId)}`);
  }

  /** The export document as raw text, byte-identical to what GET returns. */
  async experimentResult(experimentId: string): Promise<string> {
    const response = await this.request(
      'GET',
      `/api/experiments/${encodeURIComponent(experimentId)}/result`,
    );
    return response.text();
  }

  async deleteExperiment(experimentId: string): Promise<void> {
    await this.request('DELETE', `/api/experiments/${encodeURIComponent(experimentId)}`);
  }
}
