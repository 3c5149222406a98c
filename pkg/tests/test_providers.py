import json
import random
import threading

import numpy as np
import pytest

from mmrag import prompts
from mmrag.errors import ConfigurationError, ProviderError
from mmrag.providers import (
    MockChat,
    MockEmbedder,
    MockVision,
    ProviderConfig,
    ProviderKind,
    script_key,
    unit_vector,
)


def test_embed_same_text_gives_identical_vectors(embedder):
    a, b = embedder.embed(["a", "a"])
    assert a == b


def test_embed_vectors_are_unit_norm(embedder):
    rng = random.Random(0)
    texts = [" ".join(f"w{rng.randrange(50)}" for _ in range(rng.randrange(1, 30))) for _ in range(50)]
    for vec in embedder.embed(texts):
        assert abs(np.linalg.norm(vec.as_array()) - 1.0) < 1e-6


def test_embed_seed_determinism_and_divergence():
    one = MockEmbedder(seed=1).embed(["some words here"])[0]
    one_again = MockEmbedder(seed=1).embed(["some words here"])[0]
    two = MockEmbedder(seed=2).embed(["some words here"])[0]
    assert one == one_again
    assert one != two


def test_embed_order_preserved_under_permutation(embedder):
    texts = [f"text number {i} with shared words" for i in range(12)]
    base = {t: v for t, v in zip(texts, embedder.embed(texts))}
    rng = random.Random(3)
    for _ in range(10):
        shuffled = texts[:]
        rng.shuffle(shuffled)
        vecs = embedder.embed(shuffled)
        assert all(vecs[i] == base[t] for i, t in enumerate(shuffled))


def test_embed_rejects_empty_inputs(embedder):
    with pytest.raises(ValueError):
        embedder.embed([])
    with pytest.raises(ValueError):
        embedder.embed(["ok", "   "])


def test_chat_scripted_reply():
    prompt = "tell me a scripted thing"
    chat = MockChat(seed=0, script={script_key(prompt): "the canned reply"})
    assert chat.chat(prompt) == "the canned reply"


def test_chat_rejects_empty_prompt(chat):
    with pytest.raises(ValueError):
        chat.chat("")


def test_chat_rerank_reply_is_rubric_scored(chat):
    reply = chat.chat(prompts.build_rerank_prompt("q", "page text"))
    score = json.loads(reply)["relevance_score"]
    assert score in [round(0.1 * i, 1) for i in range(11)]
    assert reply == chat.chat(prompts.build_rerank_prompt("q", "page text"))


def test_chat_summary_reply_echoes_leading_tokens(chat):
    members = ["one two three four", "five six"]
    reply = chat.chat(prompts.build_summary_prompt(members))
    assert reply == "one two three four five six"


def test_chat_answer_reply_is_valid_structured_json(chat):
    from mmrag.answerer import AnswerType, build_prompt
    from mmrag.retriever import RetrievalContext

    context = RetrievalContext(pages=[(3, "some page text")])
    prompt = build_prompt("q", context, AnswerType.INTEGER).render()
    obj = json.loads(chat.chat(prompt))
    assert isinstance(obj["final_answer"], int)
    assert obj["relevant_pages"] == [3]


def test_vision_mock_desc_uses_printable_bytes_as_tag(vision):
    assert vision.describe_image(b"imgA", "describe") == "MOCK_DESC(imgA)"
    assert vision.describe_image(b"imgA", "describe") == vision.describe_image(b"imgA", "describe")


def test_vision_rejects_empty_image(vision):
    with pytest.raises(ValueError):
        vision.describe_image(b"", "describe")


def test_vision_script_override():
    vision = MockVision(seed=0, script={"imgA": prompts.NO_EVIDENCE})
    assert vision.describe_image(b"imgA", "x") == prompts.NO_EVIDENCE


def test_max_parallel_bounds_in_flight_requests():
    chat = MockChat(seed=0, max_parallel=3, latency=0.01)
    threads = [threading.Thread(target=lambda: chat.chat("hello")) for _ in range(12)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert chat.calls == 12
    assert chat.max_in_flight <= 3


def test_http_config_requires_base_url_and_model():
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind=ProviderKind.HTTP_CHAT).validate()


def test_mock_config_requires_seed():
    with pytest.raises(ConfigurationError):
        ProviderConfig(kind=ProviderKind.MOCK_CHAT).validate()


def test_unit_vector_rejects_zero():
    from mmrag.errors import ProtocolError

    with pytest.raises(ProtocolError):
        unit_vector(np.zeros(4))


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = json.dumps(self._payload)

    def json(self):
        return self._payload


def test_http_retry_succeeds_on_second_attempt(monkeypatch):
    import requests

    from mmrag import providers as providers_mod

    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append(url)
        if len(calls) == 1:
            return _FakeResponse(500)
        return _FakeResponse(200, {"choices": [{"message": {"content": "hi"}}]})

    monkeypatch.setattr(requests, "post", fake_post)
    monkeypatch.setattr(providers_mod.time, "sleep", lambda s: None)
    config = ProviderConfig(kind=ProviderKind.HTTP_CHAT, base_url="http://x", model_name="m")
    from mmrag.providers import HttpChat

    assert HttpChat(config).chat("hello") == "hi"
    assert len(calls) == 2


def test_http_error_after_retries_carries_attempts(monkeypatch):
    import requests

    from mmrag import providers as providers_mod

    monkeypatch.setattr(requests, "post", lambda *a, **kw: _FakeResponse(500))
    monkeypatch.setattr(providers_mod.time, "sleep", lambda s: None)
    config = ProviderConfig(kind=ProviderKind.HTTP_CHAT, base_url="http://x", model_name="m", max_retries=2)
    from mmrag.providers import HttpChat

    with pytest.raises(ProviderError) as err:
        HttpChat(config).chat("hello")
    assert err.value.attempts == 3


def test_module_level_ops_build_from_config():
    from mmrag.providers import chat as chat_op
    from mmrag.providers import describe_image as vision_op
    from mmrag.providers import embed as embed_op

    embed_config = ProviderConfig(kind=ProviderKind.MOCK_EMBED, seed=5)
    chat_config = ProviderConfig(kind=ProviderKind.MOCK_CHAT, seed=5)
    vision_config = ProviderConfig(kind=ProviderKind.MOCK_VISION, seed=5)

    assert embed_op(["hello world"], embed_config) == MockEmbedder(seed=5).embed(["hello world"])
    assert chat_op("hello", False, chat_config) == MockChat(seed=5).chat("hello")
    assert vision_op(b"imgZ", "look", vision_config) == "MOCK_DESC(imgZ)"


def test_build_provider_rejects_role_mismatch():
    from mmrag.providers import build_embedder

    with pytest.raises(ConfigurationError):
        build_embedder(ProviderConfig(kind=ProviderKind.MOCK_CHAT, seed=1))
