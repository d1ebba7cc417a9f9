"""Checkpoint-mode tests, skipped unless a checkpoint is supplied.

Set MODEL_SERVICE_CHECKPOINT to a sequence-classification checkpoint (hub
id or local path) to run the loading and determinism tests. The
qualitative end-to-end experiment additionally needs
MODEL_SERVICE_ECHO_DATASET, a labeled dataset in the codesmooth JSONL
format; it is informational and checkpoint-dependent by nature.
"""

import os
import threading
import time

import pytest

CHECKPOINT = os.environ.get("MODEL_SERVICE_CHECKPOINT")
ECHO_DATASET = os.environ.get("MODEL_SERVICE_ECHO_DATASET")

needs_checkpoint = pytest.mark.skipif(
    not CHECKPOINT, reason="MODEL_SERVICE_CHECKPOINT not set"
)
needs_echo = pytest.mark.skipif(
    not (CHECKPOINT and ECHO_DATASET),
    reason="MODEL_SERVICE_CHECKPOINT and MODEL_SERVICE_ECHO_DATASET not both set",
)


def checkpoint_config(**overrides):
    from model_service import load_config

    merged = {"mode": "checkpoint", "checkpoint": CHECKPOINT, **overrides}
    return load_config(overrides=merged)


@needs_checkpoint
class TestCheckpointModel:
    def test_load_labels_and_determinism(self):
        from model_service.models import CheckpointModel, Item

        model = CheckpointModel(checkpoint_config())
        model.load()
        assert model.labels() == list(checkpoint_config().label_map)
        batch = [
            Item("a", "int total = 0;", "c"),
            Item("b", "if (x) { return strcpy(dst, src); }", "c"),
            Item("c", "x" * 100_000, "generic"),   # truncated server-side
        ]
        first = model.predict(batch)
        second = model.predict(batch)
        assert first == second
        assert all(label in model.labels() for label in first)

    def test_head_dimension_mismatch_rejected(self):
        from model_service.config import ConfigError
        from model_service.models import CheckpointModel

        probe = CheckpointModel(checkpoint_config())
        probe.load()
        head = len(probe.labels())
        bad = CheckpointModel(checkpoint_config(label_map=tuple(range(head + 1))))
        with pytest.raises(ConfigError, match="head dimension"):
            bad.load()


@pytest.fixture(scope="module")
def checkpoint_url():
    if not CHECKPOINT:
        pytest.skip("MODEL_SERVICE_CHECKPOINT not set")
    import uvicorn

    from model_service import create_app

    app = create_app(checkpoint_config())
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    url = f"http://127.0.0.1:{port}"
    # loading a transformer takes a while; wait for ready, not just started
    import httpx

    deadline = time.monotonic() + 600
    while time.monotonic() < deadline:
        if httpx.get(url + "/health", timeout=10).status_code == 200:
            break
        time.sleep(1.0)
    else:
        raise RuntimeError("checkpoint never became ready")
    yield url
    server.should_exit = True
    thread.join(timeout=10)


@needs_echo
def test_qualitative_echo_smoothing_beats_raw(checkpoint_url):
    """[SECONDARY] informational: smoothed ASR < raw ASR and the mean
    certified radius lands in the plausibility band [0.5, 5]. Both
    depend on the supplied checkpoint; a miss here signals an unusual
    checkpoint, not a wire bug."""
    from codesmooth.adapters import ClassifyItem, HTTPAdapter, classify_batch
    from codesmooth.evaluation import (
        evaluate_dataset,
        load_dataset,
        naive_random_rename_attack,
    )
    from codesmooth.perturbation import SmoothingConfig

    records = load_dataset(ECHO_DATASET)[:100]
    assert records, "echo dataset is empty"
    config = SmoothingConfig(n_samples=int(os.environ.get("MODEL_SERVICE_ECHO_N", "100")))
    with HTTPAdapter(checkpoint_url) as adapter:
        raw = classify_batch(
            adapter,
            [ClassifyItem(r.id, r.code, r.language) for r in records],
        )
        correct = [r for r, res in zip(records, raw) if res.label == r.label]
        assert correct, "checkpoint misclassifies every record; echo is meaningless"
        pairs = []
        for record in correct:
            pair = naive_random_rename_attack(record, adapter, max_changes=3,
                                              max_queries=30, seed=7)
            if pair is not None:
                pairs.append(pair)
        raw_asr = len(pairs) / len(correct)
        assert pairs, "attack never succeeded; raw model is already robust"
        report = evaluate_dataset(records, config, adapter, adv_pairs=pairs)
    assert report.asr is not None and report.asr < raw_asr
    assert 0.5 <= report.mean_radius <= 5.0
