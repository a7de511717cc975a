import type { Conversation, ContextPassage, ReviewBatch } from '../src/types.js';

export function makeContext(overrides: Partial<ContextPassage> = {}): ContextPassage {
  return {
    document_id: 'd1',
    passage_id: 'd1::1',
    title: 'Doc one',
    text: 'the cat sat on the mat',
    score: 1.25,
    relevance: 'unmarked',
    source: 'retrieved',
    ...overrides,
  };
}

export function makeConversation(turns = 1, author = 'ann@example.org'): Conversation {
  const messages = [];
  for (let t = 1; t <= turns; t++) {
    messages.push({
      speaker: 'user',
      text: `What is fact number ${t}?`,
      enrichments: {},
    });
    messages.push({
      speaker: 'agent',
      text: `Fact number ${t} is well documented.`,
      contexts: [makeContext({ passage_id: `d1::${t}`, relevance: 'relevant' })],
    });
  }
  return {
    participants: { author, editors: [], reviewers: [], accessed_at: [] },
    retriever: {
      engine: 'embedded_bm25',
      corpus_id: 'wiki',
      top_k: 3,
      query_strategy: 'last_user_turn',
      bm25_k1: 1.2,
      bm25_b: 0.75,
    },
    generator: {
      engine: 'mock_echo',
      model_id: 'echo-1',
      prompt_template: '{system}\n\n{passages}\n{history}\nuser: {question}\nagent:',
      system_prompt: 'Answer from the passages.',
      passage_template: '[{n}] {title}\n{text}\n',
      decoding: { temperature: 0.0, top_p: 1.0, max_tokens: 256 },
      timeout_s: 30.0,
    },
    messages,
    status: { state: 'draft', revisions: [], comments: [] },
  };
}

export function makeBatch(count = 2, reviewer = 'rev@example.org'): ReviewBatch {
  return {
    reviewer,
    cursor: 0,
    visited: [0],
    decisions: Array(count).fill(null),
    conversations: Array.from({ length: count }, () => makeConversation(1)),
  };
}

/** Minimal fetch stand-in: the handler sees (url, init) and returns a Response. */
export function fakeFetch(
  handler: (url: string, init: RequestInit | undefined) => { status?: number; body?: unknown; text?: string },
): { fetchFn: (url: string, init?: RequestInit) => Promise<Response>; calls: { url: string; init?: RequestInit }[] } {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const out = handler(url, init);
    const status = out.status ?? 200;
    const text = out.text ?? JSON.stringify(out.body ?? {});
    return new Response(text, { status, headers: { 'content-type': 'application/json' } });
  };
  return { fetchFn, calls };
}
