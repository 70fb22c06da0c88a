import json

import numpy as np
import pytest

from langrepo.embed import (
    Embedder,
    EmbeddingProviderConfig,
    HttpEmbeddingProvider,
    build_provider,
    embed_texts,
    similarity_matrix,
)
from langrepo.errors import (
    ConfigError,
    DimensionMismatch,
    MissingEmbedding,
    ProviderUnavailable,
)


def hashed_cfg(dimension=16):
    return EmbeddingProviderConfig(kind="hashed", dimension=dimension)


class TestEmbedTexts:
    def test_identical_texts_identical_vectors(self):
        cfg = hashed_cfg()
        provider = build_provider(cfg)
        vecs = embed_texts(["same text", "same text"], provider, cfg)
        np.testing.assert_array_equal(vecs[0], vecs[1])

    def test_unit_norm(self):
        cfg = hashed_cfg()
        provider = build_provider(cfg)
        vecs = embed_texts([f"t{i}" for i in range(10)], provider, cfg)
        np.testing.assert_allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-6)

    def test_truncation_makes_long_texts_equal(self):
        cfg = EmbeddingProviderConfig(kind="hashed", dimension=8, max_text_chars=10)
        provider = build_provider(cfg)
        vecs = embed_texts(["abcdefghijKLM", "abcdefghijXYZ"], provider, cfg)
        np.testing.assert_array_equal(vecs[0], vecs[1])

    def test_missing_embedding(self, tmp_path):
        path = tmp_path / "vecs.json"
        path.write_text(json.dumps({"known": [1.0, 0.0]}))
        cfg = EmbeddingProviderConfig(kind="precomputed-file", location=str(path), dimension=2)
        provider = build_provider(cfg)
        assert embed_texts(["known"], provider, cfg).shape == (1, 2)
        with pytest.raises(MissingEmbedding):
            embed_texts(["unknown"], provider, cfg)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "vecs.json"
        path.write_text(json.dumps({"t": [1.0, 0.0]}))
        cfg = EmbeddingProviderConfig(kind="precomputed-file", location=str(path), dimension=3)
        provider = build_provider(cfg)
        with pytest.raises(DimensionMismatch):
            embed_texts(["t"], provider, cfg)

    def test_empty_input_rejected(self):
        cfg = hashed_cfg()
        with pytest.raises(ValueError):
            embed_texts([], build_provider(cfg), cfg)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            EmbeddingProviderConfig(kind="nope")


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no body")
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        return self.responses.pop(0)


class TestHttpProvider:
    def cfg(self):
        return EmbeddingProviderConfig(
            kind="http-endpoint",
            location="http://embed.test/v1",
            dimension=2,
            max_retries=2,
            backoff_s=0.0,
        )

    def test_success(self):
        session = _FakeSession([_FakeResponse(200, {"vectors": [[3.0, 4.0]]})])
        cfg = self.cfg()
        provider = HttpEmbeddingProvider(cfg, session=session)
        vecs = embed_texts(["t"], provider, cfg)
        np.testing.assert_allclose(vecs[0], [0.6, 0.8])
        assert session.calls[0]["json"] == {"texts": ["t"]}

    def test_retries_then_fails(self):
        session = _FakeSession([_FakeResponse(500), _FakeResponse(500), _FakeResponse(500)])
        provider = HttpEmbeddingProvider(self.cfg(), session=session)
        with pytest.raises(ProviderUnavailable):
            provider.embed_batch(["t"])
        assert len(session.calls) == 3

    def test_recovers_after_one_failure(self):
        session = _FakeSession([_FakeResponse(500), _FakeResponse(200, {"vectors": [[1.0, 0.0]]})])
        provider = HttpEmbeddingProvider(self.cfg(), session=session)
        assert provider.embed_batch(["t"]).shape == (1, 2)

    def test_api_key_header(self, monkeypatch):
        monkeypatch.setenv("LANGREPO_EMBED_KEY", "sekret")
        session = _FakeSession([_FakeResponse(200, {"vectors": [[1.0, 0.0]]})])
        provider = HttpEmbeddingProvider(self.cfg(), session=session)
        provider.embed_batch(["t"])
        assert session.calls[0]["headers"]["Authorization"] == "Bearer sekret"


class TestSimilarityMatrix:
    def test_self_similarity(self):
        u = np.array([[0.6, 0.8]])
        np.testing.assert_allclose(similarity_matrix(u, u), [[1.0]], atol=1e-6)

    def test_orthogonal(self):
        np.testing.assert_allclose(
            similarity_matrix(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])), [[0.0]]
        )

    def test_hand_computed_dot(self):
        # (0.6, 0.8) . (0.8, 0.6) = 0.48 + 0.48
        sim = similarity_matrix(np.array([[0.6, 0.8]]), np.array([[0.8, 0.6]]))
        np.testing.assert_allclose(sim, [[0.96]], atol=1e-12)

    def test_unit_diagonal_and_symmetry(self):
        cfg = hashed_cfg(8)
        vecs = embed_texts([f"v{i}" for i in range(6)], build_provider(cfg), cfg)
        sim = similarity_matrix(vecs, vecs)
        np.testing.assert_allclose(np.diag(sim), 1.0, atol=1e-6)
        np.testing.assert_allclose(sim, similarity_matrix(vecs, vecs).T, atol=1e-6)
        assert np.all(sim <= 1 + 1e-6) and np.all(sim >= -1 - 1e-6)

    def test_row_permutation(self):
        cfg = hashed_cfg(8)
        vecs = embed_texts([f"v{i}" for i in range(5)], build_provider(cfg), cfg)
        perm = [3, 0, 4, 1, 2]
        sim = similarity_matrix(vecs, vecs[:2])
        np.testing.assert_array_equal(similarity_matrix(vecs[perm], vecs[:2]), sim[perm])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_embedder_bundles_config():
    embedder = Embedder(hashed_cfg(12))
    assert embedder.encode(["a", "b"]).shape == (2, 12)
