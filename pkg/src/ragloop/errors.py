"""Exception hierarchy shared by every module.

Each error carries a stable machine-readable ``code`` (used in CLI output and
HTTP error bodies) and an optional ``path`` pointing at the offending element
of a document.
"""

from __future__ import annotations


class RagLoopError(Exception):
    code = "error"
    http_status = 400

    def __init__(self, message: str, *, path: str | None = None):
        super().__init__(message)
        self.path = path

    def to_payload(self) -> dict:
        return {"code": self.code, "message": str(self), "path": self.path}


# --- conversation documents -------------------------------------------------

class MalformedDocument(RagLoopError):
    """Input is not valid UTF-8 JSON."""

    code = "malformed_document"


class SchemaViolation(RagLoopError):
    """Structurally invalid document; ``path`` locates the offending element.

    ``item_index`` is set when the violation occurred inside a batch file.
    """

    code = "schema_violation"
    http_status = 422

    def __init__(self, message: str, *, path: str | None = None,
                 item_index: int | None = None):
        super().__init__(message, path=path)
        self.item_index = item_index

    def to_payload(self) -> dict:
        payload = super().to_payload()
        if self.item_index is not None:
            payload["item_index"] = self.item_index
        return payload


# --- corpora ------------------------------------------------------------------

class DuplicateCorpus(RagLoopError):
    code = "duplicate_corpus"
    http_status = 409


class EmptyCorpus(RagLoopError):
    code = "empty_corpus"


class DuplicateDocumentId(RagLoopError):
    code = "duplicate_document_id"


class InvalidDocument(RagLoopError):
    """A corpus document that cannot be ingested (bad line, missing key, empty text)."""

    code = "invalid_document"


class InvalidCorpusId(RagLoopError):
    code = "invalid_corpus_id"


class InvalidChunking(RagLoopError):
    code = "invalid_chunking"


class UnknownCorpus(RagLoopError):
    code = "unknown_corpus"
    http_status = 404


class CorruptIndex(RagLoopError):
    """Persisted index file failed its magic-header or version check."""

    code = "corrupt_index"
    http_status = 500


# --- retrieval ----------------------------------------------------------------

class MissingManualText(RagLoopError):
    code = "missing_manual_text"


class EmptyConversation(RagLoopError):
    code = "empty_conversation"


class RetrieverUnavailable(RagLoopError):
    code = "retriever_unavailable"
    http_status = 502

    def __init__(self, message: str, *, status: int | None = None):
        super().__init__(message)
        self.status = status

    def to_payload(self) -> dict:
        payload = super().to_payload()
        if self.status is not None:
            payload["status"] = self.status
        return payload


# --- generation -----------------------------------------------------------------

class TemplateError(RagLoopError):
    code = "template_error"


class NotAwaitingResponse(RagLoopError):
    """Conversation does not end with an unanswered user message."""

    code = "not_awaiting_response"


class GeneratorUnavailable(RagLoopError):
    code = "generator_unavailable"
    http_status = 502

    def __init__(self, message: str, *, status: int | None = None):
        super().__init__(message)
        self.status = status


class GeneratorTimeout(RagLoopError):
    code = "generator_timeout"
    http_status = 504


class MalformedGeneratorResponse(RagLoopError):
    code = "malformed_generator_response"
    http_status = 502


# --- conversation editing -------------------------------------------------------

class IndexOutOfRange(RagLoopError):
    code = "index_out_of_range"


class NotAgentTurn(RagLoopError):
    code = "not_agent_turn"


class NotUserTurn(RagLoopError):
    code = "not_user_turn"


class DuplicateContext(RagLoopError):
    code = "duplicate_context"
    http_status = 409


class EmptyResponse(RagLoopError):
    code = "empty_response"


class IdenticalText(RagLoopError):
    code = "identical_text"


# --- review ----------------------------------------------------------------------

class EmptyBatch(RagLoopError):
    code = "empty_batch"


class ConstraintViolation(RagLoopError):
    """An action review mode forbids; ``action`` names the rule that fired."""

    code = "constraint_violation"
    http_status = 403

    def __init__(self, message: str, *, action: str):
        super().__init__(message)
        self.action = action

    def to_payload(self) -> dict:
        payload = super().to_payload()
        payload["action"] = self.action
        return payload


class AnchorOutOfRange(RagLoopError):
    code = "anchor_out_of_range"


class EmptyComment(RagLoopError):
    code = "empty_comment"


class ItemNotVisited(RagLoopError):
    code = "item_not_visited"


class MissingEdits(RagLoopError):
    code = "missing_edits"


class MissingRejectComment(RagLoopError):
    code = "missing_reject_comment"


class UndecidedItems(RagLoopError):
    code = "undecided_items"

    def __init__(self, message: str, *, indices: list[int]):
        super().__init__(message)
        self.indices = list(indices)

    def to_payload(self) -> dict:
        payload = super().to_payload()
        payload["indices"] = self.indices
        return payload


class MissingPrincipal(RagLoopError):
    code = "missing_principal"
    http_status = 401


# --- experiments ------------------------------------------------------------------

class TaskCapExceeded(RagLoopError):
    code = "task_cap_exceeded"

    def __init__(self, message: str, *, count: int):
        super().__init__(message)
        self.count = count

    def to_payload(self) -> dict:
        payload = super().to_payload()
        payload["count"] = self.count
        return payload


class EmptyDataset(RagLoopError):
    code = "empty_dataset"


class IncompleteConversation(RagLoopError):
    code = "incomplete_conversation"


class JudgeUnavailable(RagLoopError):
    code = "judge_unavailable"
    http_status = 502


class UnknownExperiment(RagLoopError):
    code = "unknown_experiment"
    http_status = 404


class ExperimentStillRunning(RagLoopError):
    code = "experiment_still_running"
    http_status = 409
