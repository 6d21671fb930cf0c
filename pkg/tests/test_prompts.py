from __future__ import annotations

import numpy as np
import pytest

from cropscout.embeddings import l2_normalize
from cropscout.errors import BackendError, DataFormatError
from cropscout.prompts import (
    DEFAULT_TEMPLATES,
    ClassVocabulary,
    PromptSet,
    class_embeddings,
    load_prompt_set,
    render_prompts,
)


class StubEncoder:
    """Maps prompts to preconfigured vectors; unknown prompts error."""

    def __init__(self, mapping, dim=8):
        self.mapping = mapping
        self.embedding_dim = dim

    def encode(self, prompt):
        if prompt not in self.mapping:
            raise KeyError(prompt)
        return np.asarray(self.mapping[prompt], dtype=np.float64)


class TestClassVocabulary:
    def test_trims_names(self):
        vocab = ClassVocabulary([" tomato ", "kiwi"])
        assert vocab.names == ("tomato", "kiwi")

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ClassVocabulary([])
        with pytest.raises(ValueError):
            ClassVocabulary(["tomato", "  "])

    def test_rejects_casefold_duplicates(self):
        with pytest.raises(ValueError):
            ClassVocabulary(["Kiwi", "kiwi "])


class TestPromptSet:
    def test_default_templates(self):
        assert PromptSet.default().templates == DEFAULT_TEMPLATES

    def test_rejects_missing_placeholder(self):
        with pytest.raises(ValueError):
            PromptSet(["no placeholder here"])

    def test_rejects_double_placeholder(self):
        with pytest.raises(ValueError):
            PromptSet(["{} and {}"])


class TestRenderPrompts:
    def test_default_templates_substitution(self):
        rendered = render_prompts(ClassVocabulary(["tomato"]), PromptSet.default())
        assert rendered == [
            [
                "There is tomato in the scene",
                "A clear image of tomato",
                "A photo of a tomato",
            ]
        ]

    def test_empty_template_list(self):
        rendered = render_prompts(ClassVocabulary(["kiwi", "lemon"]), PromptSet([]))
        assert rendered == [[], []]

    def test_single_template(self):
        rendered = render_prompts(
            ClassVocabulary(["kiwi", "lemon"]), PromptSet(["A photo of a {}"])
        )
        assert rendered == [["A photo of a kiwi"], ["A photo of a lemon"]]


class TestClassEmbeddings:
    def test_single_template_identity(self):
        u = np.zeros(8)
        u[0] = 1.0
        encoder = StubEncoder({"A photo of a kiwi": u})
        out = class_embeddings(
            ClassVocabulary(["kiwi"]), PromptSet(["A photo of a {}"]), encoder
        )
        np.testing.assert_allclose(out[0], u, atol=1e-12)

    def test_cancellation_errors(self):
        v = np.zeros(8)
        v[0] = 1.0
        encoder = StubEncoder({"a kiwi": v, "b kiwi": -v})
        with pytest.raises(ValueError, match="zero-norm"):
            class_embeddings(ClassVocabulary(["kiwi"]), PromptSet(["a {}", "b {}"]), encoder)

    def test_three_template_average(self):
        gen = np.random.default_rng(0)
        e = gen.standard_normal((3, 8))
        encoder = StubEncoder({"a kiwi": e[0], "b kiwi": e[1], "c kiwi": e[2]})
        out = class_embeddings(
            ClassVocabulary(["kiwi"]), PromptSet(["a {}", "b {}", "c {}"]), encoder
        )
        normalized = [row / np.linalg.norm(row) for row in e]
        expected = np.mean(normalized, axis=0)
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(out[0], expected, atol=1e-12)

    def test_ensemble_off_uses_first_template(self):
        gen = np.random.default_rng(1)
        e = gen.standard_normal((2, 8))
        encoder = StubEncoder({"a kiwi": e[0], "b kiwi": e[1]})
        out = class_embeddings(
            ClassVocabulary(["kiwi"]), PromptSet(["a {}", "b {}"]), encoder, ensemble=False
        )
        np.testing.assert_allclose(out[0], l2_normalize(e[0]), atol=1e-12)

    def test_unit_norm_and_order(self):
        gen = np.random.default_rng(2)
        vocab = ClassVocabulary(["apple", "kiwi", "lemon"])
        mapping = {}
        for name in vocab:
            for t in DEFAULT_TEMPLATES:
                mapping[t.replace("{}", name)] = gen.standard_normal(16)
        out = class_embeddings(vocab, PromptSet.default(), StubEncoder(mapping, dim=16))
        assert out.shape == (3, 16)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-6)

    def test_permutation_equivariance(self):
        gen = np.random.default_rng(3)
        names = ["apple", "kiwi", "lemon", "orange"]
        mapping = {}
        for name in names:
            for t in DEFAULT_TEMPLATES:
                mapping[t.replace("{}", name)] = gen.standard_normal(16)
        encoder = StubEncoder(mapping, dim=16)
        base = class_embeddings(ClassVocabulary(names), PromptSet.default(), encoder)
        perm = [2, 0, 3, 1]
        permuted = class_embeddings(
            ClassVocabulary([names[i] for i in perm]), PromptSet.default(), encoder
        )
        np.testing.assert_allclose(permuted, base[perm], atol=1e-12)

    def test_encoder_failure_names_prompt(self):
        encoder = StubEncoder({})
        with pytest.raises(BackendError, match="A photo of a kiwi"):
            class_embeddings(ClassVocabulary(["kiwi"]), PromptSet(["A photo of a {}"]), encoder)

    def test_no_templates_errors(self):
        encoder = StubEncoder({})
        with pytest.raises(ValueError):
            class_embeddings(ClassVocabulary(["kiwi"]), PromptSet([]), encoder)


class TestPromptFile:
    def test_load_skips_comments_and_blanks(self, tmp_path):
        path = tmp_path / "templates.txt"
        path.write_text("# comment\n\nA photo of a {}\nThere is {} here\n", encoding="utf-8")
        assert load_prompt_set(path).templates == ("A photo of a {}", "There is {} here")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_prompt_set(tmp_path / "absent.txt")

    def test_load_invalid_template(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("no placeholder\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            load_prompt_set(path)
