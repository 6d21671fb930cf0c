from __future__ import annotations

import json

import pytest

from cropscout.data import (
    CAPTION_PROMPT_TEMPLATE,
    CaptionRecord,
    DetectionDataset,
    ImageInfo,
    caption_mentions_species,
    ingest_caption_responses,
    load_caption_manifest,
    load_caption_responses,
    load_detection_dataset,
    load_image_listing,
    render_caption_prompt,
    save_caption_manifest,
    save_detection_dataset,
    stratified_sample,
    write_prompt_batch,
)
from cropscout.errors import DataFormatError
from cropscout.geometry import BoundingBox
from cropscout.prompts import ClassVocabulary


def make_records(n_per_species, species):
    records = []
    for name in species:
        for i in range(n_per_species):
            records.append(
                CaptionRecord(
                    image=f"{name}-{i:03d}.png",
                    caption=f"A field photo of {name} number {i}",
                    species=name,
                    split="train",
                )
            )
    return records


class TestCaptionRecord:
    def test_validation(self):
        with pytest.raises(ValueError):
            CaptionRecord("x.png", "", "tomato")
        with pytest.raises(ValueError):
            CaptionRecord("x.png", "cap", "")
        with pytest.raises(ValueError):
            CaptionRecord("x.png", "cap", "tomato", split="val")


class TestManifestRoundTrip:
    def test_well_formed_loads(self, tmp_path):
        path = tmp_path / "m.jsonl"
        save_caption_manifest(make_records(3, ["tomato"]), path)
        assert len(load_caption_manifest(path)) == 3

    def test_save_load_save_byte_identity(self, tmp_path):
        records = make_records(4, ["tomato", "cucumber"])
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        save_caption_manifest(records, first)
        save_caption_manifest(load_caption_manifest(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_fixture_round_trip(self, fixtures_dir, tmp_path):
        fixture = fixtures_dir / "data" / "captions.jsonl"
        out = tmp_path / "copy.jsonl"
        save_caption_manifest(load_caption_manifest(fixture), out)
        assert out.read_bytes() == fixture.read_bytes()

    def test_empty_caption_names_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        lines = [
            json.dumps({"image": "a.png", "caption": "ok tomato", "species": "tomato"}),
            json.dumps({"image": "b.png", "caption": "", "species": "tomato"}),
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match=":2"):
            load_caption_manifest(path)

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            json.dumps(
                {"image": "a.png", "caption": "c tomato", "species": "tomato", "extra": 1}
            )
            + "\n",
            encoding="utf-8",
        )
        with pytest.raises(DataFormatError, match="unknown fields"):
            load_caption_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_caption_manifest(tmp_path / "absent.jsonl")


class TestRenderCaptionPrompt:
    def test_exact_template(self):
        assert render_caption_prompt("tomato") == (
            "For this tomato image, create a caption and include the crop type, "
            "number, location in the image, ripeness level, orientation, and "
            "other relevant details."
        )

    def test_idempotent_bytes(self):
        assert render_caption_prompt("kiwi") == render_caption_prompt("kiwi")

    def test_species_with_space(self):
        prompt = render_caption_prompt("dragon fruit")
        assert prompt.startswith("For this dragon fruit image, ")

    def test_empty_species_errors(self):
        with pytest.raises(ValueError):
            render_caption_prompt("  ")

    def test_template_substitution_only(self):
        for species in ("apple", "snake fruit"):
            assert render_caption_prompt(species) == CAPTION_PROMPT_TEMPLATE.format(
                species=species
            )


class TestStratifiedSample:
    def test_full_fraction_returns_everything(self):
        records = make_records(5, ["tomato", "kiwi"])
        assert stratified_sample(records, 1.0, seed=1) == records

    def test_balanced_exact_counts(self):
        species = [f"species-{i:02d}" for i in range(37)]
        records = make_records(100, species)
        sample = stratified_sample(records, 0.1, seed=9)
        assert len(sample) == 370
        per_species = {}
        for record in sample:
            per_species[record.species] = per_species.get(record.species, 0) + 1
        assert all(count == 10 for count in per_species.values())

    def test_seed_determinism(self):
        records = make_records(20, ["a", "b", "c"])
        assert stratified_sample(records, 0.25, seed=5) == stratified_sample(
            records, 0.25, seed=5
        )

    def test_minimum_one_per_species(self):
        records = make_records(2, ["rare"]) + make_records(100, ["common"])
        sample = stratified_sample(records, 0.05, seed=2)
        assert any(r.species == "rare" for r in sample)

    def test_proportions_within_one(self):
        records = make_records(30, ["a"]) + make_records(70, ["b"])
        sample = stratified_sample(records, 0.2, seed=3)
        counts = {"a": 0, "b": 0}
        for r in sample:
            counts[r.species] += 1
        assert abs(counts["a"] - 6) <= 1
        assert abs(counts["b"] - 14) <= 1

    def test_empty_input(self):
        assert stratified_sample([], 0.5, seed=0) == []

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            stratified_sample(make_records(2, ["a"]), 0.0)


class TestCaptionHarness:
    def test_prompt_batch_uses_exact_template(self, tmp_path):
        listing = [{"image": "i1.png", "species": "tomato"}]
        out = tmp_path / "prompts.jsonl"
        write_prompt_batch(listing, out)
        record = json.loads(out.read_text().splitlines()[0])
        assert record == {"image": "i1.png", "prompt": render_caption_prompt("tomato")}

    def test_ingest_round_trip(self, fixtures_dir):
        listing = load_image_listing(fixtures_dir / "data" / "listing.jsonl")
        responses = load_caption_responses(fixtures_dir / "data" / "responses.jsonl")
        records = ingest_caption_responses(listing, responses)
        assert [r.species for r in records] == ["tomato", "cucumber", "dragon fruit"]
        assert records[2].split == "test"

    def test_ingest_missing_response_lists_ids(self):
        listing = [
            {"image": "a.png", "species": "tomato"},
            {"image": "b.png", "species": "kiwi"},
        ]
        with pytest.raises(DataFormatError, match=r"\['b.png'\]"):
            ingest_caption_responses(listing, {"a.png": "a tomato"})

    def test_consistency_check(self):
        listing = [{"image": "a.png", "species": "tomato"}]
        with pytest.raises(DataFormatError, match="consistency"):
            ingest_caption_responses(listing, {"a.png": "some cucumbers"})
        records = ingest_caption_responses(
            listing, {"a.png": "some cucumbers"}, check_consistency=False
        )
        assert records[0].caption == "some cucumbers"

    def test_mention_check_is_casefolded_substring(self):
        assert caption_mentions_species("Two ripe Tomatoes on the vine", "tomato")
        assert not caption_mentions_species("an empty field", "tomato")


def small_dataset():
    return DetectionDataset(
        images=[
            ImageInfo(id=1, file_name="a.png", width=100, height=80),
            ImageInfo(id=2, file_name="b.png", width=64, height=64),
        ],
        ground_truths={
            1: [
                (BoundingBox(10.0, 20.0, 40.0, 60.0), "tomato"),
                (BoundingBox(0.0, 0.0, 10.0, 10.0), "kiwi"),
            ],
            2: [(BoundingBox(5.0, 5.0, 30.0, 30.0), "tomato")],
        },
        vocabulary=ClassVocabulary(["tomato", "kiwi"]),
    )


class TestDetectionDataset:
    def test_fixture_round_trip(self, fixtures_dir, tmp_path):
        fixture = fixtures_dir / "data" / "dataset.json"
        out = tmp_path / "copy.json"
        save_detection_dataset(load_detection_dataset(fixture), out)
        assert out.read_bytes() == fixture.read_bytes()

    def test_save_load_save_byte_identity(self, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_detection_dataset(small_dataset(), first)
        save_detection_dataset(load_detection_dataset(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_width_height_conversion(self, tmp_path):
        path = tmp_path / "d.json"
        save_detection_dataset(small_dataset(), path)
        loaded = load_detection_dataset(path)
        [box_kiwi] = [b for b, name in loaded.truths_for(1) if name == "kiwi"]
        assert box_kiwi == BoundingBox(0, 0, 10, 10)
        doc = json.loads(path.read_text())
        assert doc["annotations"][0]["bbox"] == [10.0, 20.0, 30.0, 40.0]

    def test_dangling_category_names_annotation(self, tmp_path):
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [
                {"id": 77, "image_id": 1, "category_id": 9, "bbox": [0.0, 0.0, 1.0, 1.0]}
            ],
            "categories": [{"id": 1, "name": "tomato"}],
        }
        path = tmp_path / "d.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(DataFormatError, match="77"):
            load_detection_dataset(path)

    def test_out_of_bounds_box_names_annotation(self, tmp_path):
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [
                {"id": 5, "image_id": 1, "category_id": 1, "bbox": [8.0, 8.0, 5.0, 1.0]}
            ],
            "categories": [{"id": 1, "name": "tomato"}],
        }
        path = tmp_path / "d.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(DataFormatError, match="annotation 5"):
            load_detection_dataset(path)

    def test_counts(self, fixtures_dir):
        dataset = load_detection_dataset(fixtures_dir / "data" / "dataset.json")
        assert len(dataset.images) == 2
        assert sum(len(v) for v in dataset.ground_truths.values()) == 4
        assert dataset.vocabulary.names == ("tomato", "cucumber")

    def test_all_boxes_satisfy_invariants(self, fixtures_dir):
        dataset = load_detection_dataset(fixtures_dir / "data" / "dataset.json")
        for info in dataset.images:
            for box, _ in dataset.truths_for(info.id):
                assert 0 <= box.x_min <= box.x_max <= info.width
                assert 0 <= box.y_min <= box.y_max <= info.height
