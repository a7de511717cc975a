// Wire shapes exchanged with the backend. These mirror the server's JSON
// exactly; the UI never derives its own versions of computed values.

export interface RemoteRetriever {
  endpoint: string;
  auth_token_env: string;
  field_mapping: Record<string, string>;
}

export interface RetrieverConfig {
  engine: string;
  corpus_id: string;
  top_k: number;
  query_strategy: string;
  bm25_k1: number;
  bm25_b: number;
  remote?: RemoteRetriever;
  settings?: Record<string, string>;
}

export interface Decoding {
  temperature: number;
  top_p: number;
  max_tokens: number;
}

export interface GeneratorConfig {
  engine: string;
  model_id: string;
  prompt_template: string;
  system_prompt: string;
  passage_template: string;
  decoding: Decoding;
  timeout_s: number;
  endpoint?: { url: string; auth_token_env: string };
  settings?: Record<string, string>;
}

export interface ContextPassage {
  document_id: string;
  passage_id: string;
  title: string;
  text: string;
  score: number;
  relevance: string;
  source: string;
}

export interface Enrichments {
  question_type?: string;
  answerability?: string;
  multi_turn?: string;
}

export interface Message {
  speaker: string;
  text: string;
  enrichments?: Enrichments;
  original_text?: string;
  contexts?: ContextPassage[];
}

export interface CommentAnchor {
  message_index: number;
  start: number;
  end: number;
}

export interface Comment {
  author: string;
  text: string;
  anchor?: CommentAnchor;
}

export interface Revision {
  editor: string;
  timestamp: string;
  message_index: number;
  field: string;
  before: string;
  after: string;
}

export interface Status {
  state: string;
  revisions: Revision[];
  comments: Comment[];
}

export interface Participants {
  author: string;
  editors: string[];
  reviewers: string[];
  accessed_at: string[];
}

export interface Conversation {
  participants: Participants;
  retriever: RetrieverConfig;
  generator: GeneratorConfig;
  messages: Message[];
  status: Status;
}

export interface SearchHit {
  document_id: string;
  passage_id: string;
  title: string;
  text: string;
  score: number;
}

export interface GenerationResult {
  text: string;
  prompt_tokens: number | null;
  completion_tokens: number | null;
  latency_ms: number;
}

export interface DiffSegment {
  kind: string; // equal | insert | delete
  tokens: string[];
}

export interface OverlapSpan {
  response_start: number;
  response_end: number;
  passage_index: number;
  passage_start: number;
  passage_end: number;
  length_tokens: number;
}

export interface Hint {
  kind: string;
  message_index: number;
  text: string;
}

export interface ValidationEntry {
  kind: string;
  message_index: number;
  detail: string;
}

export interface ChecklistItem {
  label: string;
  checked: boolean;
}

export interface ExportStatistics {
  turn_count: number;
  enrichment_coverage: number;
  relevant_context_coverage: number;
  edited_response_count: number;
}

export interface Checklist {
  items: ChecklistItem[];
  statistics: ExportStatistics;
}

export type Decision = 'accept' | 'accept_with_edits' | 'reject';

export interface ReviewBatch {
  reviewer: string;
  cursor: number;
  visited: number[];
  decisions: (Decision | null)[];
  conversations: Conversation[];
}

export interface Progress {
  done: number;
  total: number;
  failed: number;
}

export interface ExperimentSnapshot {
  experiment_id: string;
  state: 'running' | 'done' | 'failed';
  progress: Progress;
  error?: string;
}

export interface ChatTurnResult {
  conversation: Conversation;
  response: GenerationResult;
  contexts: ContextPassage[];
}

export interface ExportResult {
  document: string;
  checklist: Checklist;
}

export interface CorpusStats {
  corpus_id: string;
  document_count: number;
  passage_count: number;
  vocabulary_size: number;
  avg_doc_length: number;
}

export type EditRequest =
  | { kind: 'response'; turn_index: number; text: string }
  | { kind: 'relevance'; turn_index: number; context_ordinal: number; relevance: string }
  | { kind: 'enrichments'; turn_index: number; enrichments: Enrichments }
  | { kind: 'add_passage'; turn_index: number; hit: SearchHit };
