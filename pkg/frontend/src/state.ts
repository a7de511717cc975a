import type {
  Checklist,
  Conversation,
  DiffSegment,
  ExperimentSnapshot,
  Hint,
  OverlapSpan,
  Progress,
  ReviewBatch,
  SearchHit,
} from './types.js';
import type { ApiErrorPayload } from './api.js';

export type Mode = 'create' | 'review' | 'experiment';

export interface ErrorInfo extends ApiErrorPayload {
  httpStatus: number;
}

export interface ResponseEdit {
  turnIndex: number;
  draft: string;
}

export interface CreateState {
  conversation: Conversation | null;
  question: string;
  hints: Hint[];
  sideQuery: string;
  sideHits: SearchHit[];
  sideTurn: number | null;
  edit: ResponseEdit | null;
  diff: { turnIndex: number; segments: DiffSegment[] } | null;
  overlap: { turnIndex: number; spans: OverlapSpan[] } | null;
  exportDialog: { document: string; checklist: Checklist } | null;
}

export interface ReviewState {
  batch: ReviewBatch | null;
  constraint: string | null;
  commentDraft: string;
  exported: string | null;
}

export type ExperimentPhase = 'idle' | 'running' | 'done' | 'failed';

export interface ExperimentState {
  specText: string;
  experimentId: string | null;
  phase: ExperimentPhase;
  progress: Progress | null;
  history: number[];
  failure: string | null;
  result: string | null;
}

export interface AppState {
  mode: Mode;
  busy: boolean;
  error: ErrorInfo | null;
  create: CreateState;
  review: ReviewState;
  experiment: ExperimentState;
}

export function initialState(): AppState {
  return {
    mode: 'create',
    busy: false,
    error: null,
    create: {
      conversation: null,
      question: '',
      hints: [],
      sideQuery: '',
      sideHits: [],
      sideTurn: null,
      edit: null,
      diff: null,
      overlap: null,
      exportDialog: null,
    },
    review: { batch: null, constraint: null, commentDraft: '', exported: null },
    experiment: {
      specText: '',
      experimentId: null,
      phase: 'idle',
      progress: null,
      history: [],
      failure: null,
      result: null,
    },
  };
}

export function setMode(state: AppState, mode: Mode): AppState {
  return { ...state, mode, error: null };
}

export function setError(state: AppState, error: ErrorInfo | null): AppState {
  return { ...state, error };
}

export function setBusy(state: AppState, busy: boolean): AppState {
  return { ...state, busy };
}

export function setConversation(state: AppState, conversation: Conversation | null): AppState {
  // A fresh document invalidates any view derived from the previous one.
  return {
    ...state,
    create: { ...state.create, conversation, diff: null, overlap: null, exportDialog: null },
  };
}

export function setQuestion(state: AppState, question: string): AppState {
  return { ...state, create: { ...state.create, question } };
}

export function setHints(state: AppState, hints: Hint[]): AppState {
  return { ...state, create: { ...state.create, hints } };
}

export function setSideSearch(state: AppState, query: string, hits: SearchHit[], turnIndex: number | null): AppState {
  return { ...state, create: { ...state.create, sideQuery: query, sideHits: hits, sideTurn: turnIndex } };
}

export function startEdit(state: AppState, turnIndex: number, draft: string): AppState {
  return { ...state, create: { ...state.create, edit: { turnIndex, draft } } };
}

export function setDiff(state: AppState, turnIndex: number, segments: DiffSegment[]): AppState {
  return { ...state, create: { ...state.create, edit: null, diff: { turnIndex, segments } } };
}

export function setOverlap(state: AppState, overlap: { turnIndex: number; spans: OverlapSpan[] } | null): AppState {
  return { ...state, create: { ...state.create, overlap } };
}

export function setExportDialog(state: AppState, dialog: { document: string; checklist: Checklist } | null): AppState {
  return { ...state, create: { ...state.create, exportDialog: dialog } };
}

export function setBatch(state: AppState, batch: ReviewBatch | null): AppState {
  return { ...state, review: { ...state.review, batch, constraint: null } };
}

export function setConstraint(state: AppState, constraint: string | null): AppState {
  return { ...state, review: { ...state.review, constraint } };
}

export function setCommentDraft(state: AppState, commentDraft: string): AppState {
  return { ...state, review: { ...state.review, commentDraft } };
}

export function setReviewExport(state: AppState, exported: string | null): AppState {
  return { ...state, review: { ...state.review, exported } };
}

export function setSpecText(state: AppState, specText: string): AppState {
  return { ...state, experiment: { ...state.experiment, specText } };
}

export function launchExperiment(state: AppState, experimentId: string, total: number): AppState {
  return {
    ...state,
    experiment: {
      ...state.experiment,
      experimentId,
      phase: 'running',
      progress: { done: 0, total, failed: 0 },
      history: [0],
      failure: null,
      result: null,
    },
  };
}

/**
 * Record one poll of the experiment. The history keeps every observed done
 * count so tests can check the displayed progress never moves backwards.
 */
export function recordSnapshot(state: AppState, snap: ExperimentSnapshot): AppState {
  const phase: ExperimentPhase = snap.state;
  return {
    ...state,
    experiment: {
      ...state.experiment,
      phase,
      progress: snap.progress,
      history: [...state.experiment.history, snap.progress.done],
      failure: snap.error ?? null,
    },
  };
}

export function setExperimentResult(state: AppState, result: string): AppState {
  return { ...state, experiment: { ...state.experiment, result } };
}

export function resetExperiment(state: AppState): AppState {
  return {
    ...state,
    experiment: { ...initialState().experiment, specText: state.experiment.specText },
  };
}

// Presentation predicates for the decision buttons. They mirror what the
// reading pane already shows (comments, the revision list); the server
// re-checks the real preconditions on every decide call.

export function currentItem(batch: ReviewBatch): Conversation {
  return batch.conversations[batch.cursor];
}

export function canReject(batch: ReviewBatch): boolean {
  return currentItem(batch).status.comments.length > 0;
}

export function canAcceptWithEdits(batch: ReviewBatch): boolean {
  return currentItem(batch).status.revisions.some((r) => r.editor === batch.reviewer);
}

export function allDecided(batch: ReviewBatch): boolean {
  return batch.decisions.every((d) => d !== null);
}
