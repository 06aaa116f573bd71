"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class IncunaError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(IncunaError):
    """A source document could not be read or rendered."""

    def __init__(self, doc_id: str, message: str):
        self.doc_id = doc_id
        super().__init__(f"{doc_id}: {message}")


class LabelParseError(IncunaError):
    """A label file line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class RemapError(IncunaError):
    """External annotation data violates the remapping contract."""


class BackendError(IncunaError):
    """A model backend is missing a required capability or failed to load."""


class DetectionError(IncunaError):
    """Detection failed on a specific page."""

    def __init__(self, doc_id: str, page_number: int, message: str):
        self.doc_id = doc_id
        self.page_number = page_number
        super().__init__(f"{doc_id} p{page_number}: {message}")


class OcrError(IncunaError):
    """An OCR engine failed on a specific crop."""

    def __init__(self, engine_name: str, crop_ref: str, message: str):
        self.engine_name = engine_name
        self.crop_ref = crop_ref
        super().__init__(f"{engine_name} on {crop_ref}: {message}")


class ContractError(IncunaError):
    """A region of the wrong class was routed to a stage."""


class DataError(IncunaError):
    """Training or reference data is missing or unreadable."""


class ValidationError(IncunaError):
    """Configuration validation failed; carries every problem found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
