"""Dataset loaders, normalized records, OCR box derivation, and question typing."""

from .analysis import (
    PartitionResult,
    SizeGroup,
    attach_derived_boxes,
    derive_answer_bbox,
    most_frequent_answer,
    partition_by_size,
    size_group_for,
    string_similarity,
)
from .question_types import (
    PREFIX_TABLE,
    QuestionType,
    classify_question_type,
    count_question_types,
)
from .records import IngestError, OcrToken, VqaRecord, read_records, write_records
from .textvqa import ingest_textvqa
from .vqav2 import IngestResult, ingest_vqav2

__all__ = [
    "IngestError",
    "IngestResult",
    "OcrToken",
    "PREFIX_TABLE",
    "PartitionResult",
    "QuestionType",
    "SizeGroup",
    "VqaRecord",
    "attach_derived_boxes",
    "classify_question_type",
    "count_question_types",
    "derive_answer_bbox",
    "ingest_textvqa",
    "ingest_vqav2",
    "most_frequent_answer",
    "partition_by_size",
    "read_records",
    "size_group_for",
    "string_similarity",
    "write_records",
]
