"""Loaders, normalized records, OCR box derivation, size bands, question types."""

import json

import pytest

from crop_vqa.datasets import (
    IngestError,
    OcrToken,
    PREFIX_TABLE,
    QuestionType,
    SizeGroup,
    VqaRecord,
    classify_question_type,
    count_question_types,
    derive_answer_bbox,
    ingest_textvqa,
    ingest_vqav2,
    most_frequent_answer,
    partition_by_size,
    read_records,
    size_group_for,
    string_similarity,
    write_records,
)
from crop_vqa.datasets.analysis import attach_derived_boxes, levenshtein
from crop_vqa.geometry import Rect


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def vqav2_fixture(tmp_path, n=2):
    questions = {
        "data_subtype": "val2014",
        "questions": [
            {"question_id": 100 + i, "image_id": 42 + i, "question": f"What color is item {i}?"}
            for i in range(n)
        ],
    }
    annotations = {
        "data_subtype": "val2014",
        "annotations": [
            {
                "question_id": 100 + i,
                "image_id": 42 + i,
                "answers": [{"answer": f"blue{i}", "answer_id": k + 1} for k in range(10)],
            }
            for i in range(n)
        ],
    }
    q_path = write_json(tmp_path / "questions.json", questions)
    a_path = write_json(tmp_path / "annotations.json", annotations)
    return q_path, a_path


class TestIngestVqav2:
    def test_two_question_fixture(self, tmp_path):
        q_path, a_path = vqav2_fixture(tmp_path)
        result = ingest_vqav2(q_path, a_path)
        assert len(result.records) == 2
        assert result.records[0].question_id == "100"
        assert result.records[0].answers == tuple(["blue0"] * 10)
        assert result.records[0].image_ref == "COCO_val2014_000000000042.jpg"

    def test_missing_annotation_names_the_id(self, tmp_path):
        q_path, a_path = vqav2_fixture(tmp_path)
        annotations = json.loads(a_path.read_text())
        annotations["annotations"].pop()
        write_json(a_path, annotations)
        with pytest.raises(IngestError, match="101"):
            ingest_vqav2(q_path, a_path)

    def test_missing_image_files_skipped_with_count(self, tmp_path):
        q_path, a_path = vqav2_fixture(tmp_path)
        image_dir = tmp_path / "images"
        image_dir.mkdir()
        (image_dir / "COCO_val2014_000000000042.jpg").write_bytes(b"stub")
        result = ingest_vqav2(q_path, a_path, image_dir)
        assert len(result.records) == 1
        assert result.skipped_missing_image == ["101"]


def textvqa_fixture(tmp_path, ocr_words=("NY", "NYC", "exit")):
    data = {
        "data": [
            {
                "question_id": 7,
                "image_id": "abc123",
                "question": "what letter is on the sign?",
                "answers": ["ny"] * 10,
                "image_width": 200,
                "image_height": 100,
            },
            {
                "question_id": 8,
                "image_id": "no_ocr_image",
                "question": "who is winning?",
                "answers": ["michigan"] * 10,
                "image_width": 640,
                "image_height": 480,
            },
        ]
    }
    ocr = {
        "data": [
            {
                "image_id": "abc123",
                "ocr_info": [
                    {
                        "word": word,
                        "bounding_box": {
                            "top_left_x": 0.1 * (i + 1),
                            "top_left_y": 0.2,
                            "width": 0.05,
                            "height": 0.1,
                        },
                    }
                    for i, word in enumerate(ocr_words)
                ],
            }
        ]
    }
    q_path = write_json(tmp_path / "textvqa.json", data)
    o_path = write_json(tmp_path / "ocr.json", ocr)
    return q_path, o_path


class TestIngestTextvqa:
    def test_ocr_tokens_attached(self, tmp_path):
        q_path, o_path = textvqa_fixture(tmp_path)
        result = ingest_textvqa(q_path, o_path)
        record = result.records[0]
        assert len(record.ocr_tokens) == 3
        assert record.image_size == (200, 100)
        # 0.1*200=20, 0.2*100=20, +0.05*200=10 wide, +0.1*100=10 tall
        assert record.ocr_tokens[0].box.as_tuple() == (20, 20, 30, 30)

    def test_image_without_ocr_entry_keeps_record(self, tmp_path):
        q_path, o_path = textvqa_fixture(tmp_path)
        result = ingest_textvqa(q_path, o_path)
        no_ocr = result.records[1]
        assert no_ocr.ocr_tokens == ()


class TestRecordsRoundTrip:
    def test_jsonl_round_trip(self, tmp_path):
        records = [
            VqaRecord(
                question_id="1",
                image_ref="a.png",
                question="what?",
                answers=("x",) * 10,
                gt_box=Rect(1, 2, 3, 4),
                ocr_tokens=(OcrToken("x", Rect(0, 0, 2, 2)),),
                image_size=(10, 10),
            ),
            VqaRecord(question_id="2", image_ref="b.png", question="why?", answers=("y",)),
        ]
        path = tmp_path / "records.jsonl"
        assert write_records(path, records) == 2
        assert read_records(path) == records

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"__meta__": {"schema_version": 99}}\n', encoding="utf-8")
        with pytest.raises(IngestError):
            read_records(path)

    def test_too_many_answers_rejected(self):
        with pytest.raises(IngestError):
            VqaRecord(question_id="1", image_ref="a", question="q", answers=("a",) * 11)


class TestStringSimilarity:
    def test_case_insensitive_identity(self):
        assert string_similarity("NY", "ny") == 1.0

    def test_one_edit_over_three(self):
        # levenshtein("abc","abd") = 1, so similarity = 1 - 1/3
        assert levenshtein("abc", "abd") == 1
        assert string_similarity("abc", "abd") == pytest.approx(2 / 3)

    def test_empty_vs_nonempty(self):
        assert string_similarity("", "x") == 0.0

    def test_both_empty(self):
        assert string_similarity("", "") == 1.0

    def test_alternate_measure(self):
        assert string_similarity("red bus", "bus red", measure="token_jaccard") == 1.0
        with pytest.raises(ValueError):
            string_similarity("a", "b", measure="soundex")


def record_with_tokens(tokens, answers=("ny",) * 10):
    return VqaRecord(
        question_id="r1",
        image_ref="img.jpg",
        question="what letter?",
        answers=tuple(answers),
        ocr_tokens=tuple(tokens),
        image_size=(100, 100),
    )


class TestDeriveAnswerBbox:
    def test_exact_match_wins(self):
        b1, b2 = Rect(0, 0, 10, 10), Rect(20, 20, 30, 30)
        record = record_with_tokens([OcrToken("NY", b1), OcrToken("NYC", b2)])
        assert derive_answer_bbox(record) == b1

    def test_case_insensitive(self):
        box = Rect(5, 5, 9, 9)
        record = record_with_tokens([OcrToken("MICHIGAN", box)], answers=("michigan",) * 10)
        assert derive_answer_bbox(record) == box

    def test_equal_similarity_prefers_larger_area(self):
        small = Rect(0, 0, 10, 10)       # area 100
        large = Rect(50, 50, 70, 70)     # area 400
        record = record_with_tokens([OcrToken("ny", small), OcrToken("ny", large)])
        assert derive_answer_bbox(record) == large

    def test_equal_similarity_and_area_reading_order(self):
        late = Rect(10, 50, 20, 60)
        early = Rect(10, 5, 20, 15)
        record = record_with_tokens([OcrToken("ny", late), OcrToken("ny", early)])
        assert derive_answer_bbox(record) == early

    def test_no_tokens_returns_none(self):
        record = record_with_tokens([])
        assert derive_answer_bbox(record) is None

    def test_weak_matches_excluded(self):
        record = record_with_tokens([OcrToken("zzzzzz", Rect(0, 0, 5, 5))])
        assert derive_answer_bbox(record) is None
        assert derive_answer_bbox(record, min_similarity=None) == Rect(0, 0, 5, 5)

    def test_majority_answer_selected(self):
        answers = ("stop", "stop", "go", "stop", "go", "go", "stop", "yield", "stop", "stop")
        assert most_frequent_answer(answers) == "stop"
        tied = ("go", "stop", "stop", "go")
        assert most_frequent_answer(tied) == "go"  # earliest annotator on a tie

    def test_attach_derived_boxes_counts_boxless(self):
        with_ocr = record_with_tokens([OcrToken("ny", Rect(0, 0, 4, 4))])
        without = VqaRecord(
            question_id="r2", image_ref="b.jpg", question="why?", answers=("x",) * 10
        )
        out, missing = attach_derived_boxes([with_ocr, without])
        assert out[0].gt_box == Rect(0, 0, 4, 4)
        assert out[1].gt_box is None
        assert missing == 1


class TestPartitionBySize:
    def test_boundary_semantics(self):
        assert size_group_for(0.0049) is SizeGroup.G1
        assert size_group_for(0.005) is SizeGroup.G2
        assert size_group_for(0.0499) is SizeGroup.G2
        assert size_group_for(0.05) is SizeGroup.G3

    def test_six_record_fixture_two_per_group(self):
        def rec(i, box):
            return VqaRecord(
                question_id=str(i),
                image_ref=f"{i}.jpg",
                question="q?",
                answers=("a",) * 10,
                gt_box=box,
                image_size=(1000, 1000),
            )

        records = [
            rec(0, Rect(0, 0, 10, 10)),      # 1e-4  -> G1
            rec(1, Rect(0, 0, 70, 70)),      # 0.0049 -> G1
            rec(2, Rect(0, 0, 100, 50)),     # 0.005  -> G2
            rec(3, Rect(0, 0, 200, 200)),    # 0.04   -> G2
            rec(4, Rect(0, 0, 250, 200)),    # 0.05   -> G3
            rec(5, Rect(0, 0, 1000, 1000)),  # 1.0    -> G3
        ]
        result = partition_by_size(records)
        assert result.sizes() == {SizeGroup.G1: 2, SizeGroup.G2: 2, SizeGroup.G3: 2}
        assert result.skipped == 0

    def test_records_without_boxes_counted(self):
        record = VqaRecord(
            question_id="1", image_ref="a.jpg", question="q?", answers=("a",), image_size=(10, 10)
        )
        result = partition_by_size([record])
        assert result.skipped == 1

    def test_sizes_mapping_overrides(self):
        record = VqaRecord(
            question_id="1",
            image_ref="a.jpg",
            question="q?",
            answers=("a",),
            gt_box=Rect(0, 0, 10, 10),
        )
        result = partition_by_size([record], sizes={"a.jpg": (100, 100)})
        assert result.sizes()[SizeGroup.G2] == 1


class TestQuestionTypes:
    def test_prefix_table_has_no_duplicates(self):
        assert len(PREFIX_TABLE) == 2 + 7 + 9 + 8 + 3 + 2

    @pytest.mark.parametrize(
        "question,expected",
        [
            ("How many dogs are here?", QuestionType.COUNTING),
            ("What color is the bus?", QuestionType.OBJECT_ATTRIBUTES),
            ("Why is the sky blue?", QuestionType.OTHER),
            ("What letter does the sign show?", QuestionType.READING),
            ("Is there a mountain behind the building?", QuestionType.EXISTENCE),
            ("Where is the cat?", QuestionType.LOCALIZATION),
            ("What sport is this?", QuestionType.CATEGORIZATION),
            ("How many?", QuestionType.COUNTING),  # trailing punctuation stripped
            ("what", QuestionType.OTHER),  # single word
            ("", QuestionType.OTHER),
        ],
    )
    def test_classification(self, question, expected):
        assert classify_question_type(question) is expected

    def test_every_listed_prefix_maps_to_its_type(self):
        for prefix, expected in PREFIX_TABLE.items():
            assert classify_question_type(f"{prefix.capitalize()} something here?") is expected

    def test_count_question_types(self):
        counts = count_question_types(["How many x?", "How much y?", "Unusual question?"])
        assert counts[QuestionType.COUNTING] == 2
        assert counts[QuestionType.OTHER] == 1
