"""Acceptance suite.

One test per acceptance criterion, each at its stated tolerance, each
printing a single PASS line (run with ``pytest -s`` to see the lines as the
criteria complete). The printed values double as the reported numbers for
the reasoning-depth comparison, where every per-seed accuracy is shown.
"""

import time

import numpy as np
import pytest

from videoqa import autodiff as ad
from videoqa.ablation import run_ablation
from videoqa.autodiff import Tensor
from videoqa.checkpoint import load_checkpoint, save_checkpoint
from videoqa.dataset import write_dataset
from videoqa.metrics import first_k_score
from videoqa.model import EncodedVideo, ModelConfig, VideoQAModel
from videoqa.synth import PlantedRule, majority_class_rate, synth_generate
from videoqa.training import AdaGrad, TrainConfig, full_model_grad_check, train

from oracles import accuracy_formula_bruteforce, adagrad_recurrence

GRADCHECK_CONFIG = ModelConfig(vocab_size=8, n_classes=3, frame_dim=4, embed_dim=4,
                               hidden_dim=3, n_frames=3, reasoning_steps=2,
                               max_answer_len=4)


def ok(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {name}: PASS{suffix}")


def test_paper_numbers_not_reproducible_documented():
    # The source experiments ran on a generated YouTube2Text QA corpus that
    # was never released, so absolute accuracy tables cannot be reproduced;
    # the property-based criteria below stand in for them.
    ok("paper-number-reproducibility",
       "original corpus unreleased; property-based substitutes follow")


def test_gradient_integrity():
    started = time.monotonic()
    worst = 0.0
    for task, lam in (("mc", 1e-4), ("oe", 0.0)):
        report = full_model_grad_check(GRADCHECK_CONFIG, task=task, lam=lam,
                                       eps=1e-5, tol=1e-4, seed=0)
        assert report.passed, f"{task}: {report}"
        worst = max(worst, report.max_rel_error)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s"
    ok("gradient-integrity", f"max_rel_error={worst:.2e}, {elapsed:.1f}s for both heads")


def test_attention_contract_over_1000_forward_passes():
    cfg = ModelConfig(vocab_size=10, n_classes=4, frame_dim=5, embed_dim=5,
                      hidden_dim=4, n_frames=4, reasoning_steps=2, max_answer_len=4)
    rng = np.random.default_rng(0)
    model = None
    checked = 0
    for i in range(1000):
        if i % 50 == 0:
            model = VideoQAModel.initialize(cfg, seed=int(rng.integers(1 << 30)))
        rows = [Tensor(rng.normal(0, 0.8, cfg.frame_dim)) for _ in range(cfg.n_frames)]
        attrs = []
        for _ in range(cfg.n_frames):
            k = int(rng.integers(0, 3))
            attrs.append(tuple(sorted(rng.choice(np.arange(4, cfg.vocab_size), k,
                                                 replace=False).tolist())))
        question = [int(t) for t in rng.integers(4, cfg.vocab_size, size=3)]
        _, trace = model.forward_mc(rows, attrs, question)
        for step in trace:
            assert abs(step.weights.sum() - 1.0) <= 1e-9
            assert np.all(step.weights >= 0.0)
            checked += 1

    uniform_model = VideoQAModel.initialize(cfg, seed=123)
    uniform_model.params["attn_wv"].values[...] = 0.0
    expected = np.full(cfg.n_frames, 1.0 / cfg.n_frames)
    for _ in range(50):
        rows = [Tensor(rng.normal(0, 0.8, cfg.frame_dim)) for _ in range(cfg.n_frames)]
        question = [int(t) for t in rng.integers(4, cfg.vocab_size, size=3)]
        _, trace = uniform_model.forward_mc(rows, [()] * cfg.n_frames, question)
        for step in trace:
            np.testing.assert_allclose(step.weights, expected, rtol=0, atol=1e-12)
    ok("attention-contract", f"{checked} weight vectors from 1000 passes")


def test_reasoning_identities():
    cfg = GRADCHECK_CONFIG
    model = VideoQAModel.initialize(cfg, seed=1)
    rng = np.random.default_rng(2)

    h_q = Tensor(rng.normal(size=cfg.joint_dim))
    rows = [Tensor(rng.normal(size=cfg.joint_dim)) for _ in range(cfg.n_frames)]
    video = EncodedVideo(rows, rows, ad.stack_rows(rows), True)
    z0, trace0 = model.reason(h_q, video, steps=0)
    assert z0 is h_q and trace0 == []

    zero_rows = [Tensor(np.zeros(cfg.joint_dim)) for _ in range(cfg.n_frames)]
    zero_video = EncodedVideo(zero_rows, zero_rows, ad.stack_rows(zero_rows), True)
    for steps in (1, 2, 3):
        z, _ = model.reason(h_q, zero_video, steps=steps)
        assert np.array_equal(z.values, h_q.values)

    feature_rows = [Tensor(rng.normal(0, 0.5, cfg.frame_dim)) for _ in range(cfg.n_frames)]
    empty_attrs = [()] * cfg.n_frames
    question = [4, 5, 6]
    flag_off = VideoQAModel.initialize(cfg.variant(use_attributes=False), seed=9)
    p_off, _ = flag_off.forward_mc(feature_rows, empty_attrs, question)
    flag_on = VideoQAModel.initialize(cfg, seed=9)
    p_on, _ = flag_on.forward_mc(feature_rows, empty_attrs, question)
    assert np.array_equal(p_off.values, p_on.values)
    ok("reasoning-identities")


def test_metric_matches_bruteforce_formula_on_200_cases():
    rng = np.random.default_rng(42)
    for case in range(200):
        length = int(rng.integers(1, 10))
        y = rng.integers(0, 5, size=length).tolist()
        o = rng.integers(0, 5, size=length).tolist()
        if case % 7 == 0:
            o = list(y)  # force exact matches through the formula too
        k = int(rng.integers(1, length + 1))
        assert first_k_score(y, o, k) == accuracy_formula_bruteforce(y, o, k), \
            f"case {case}: y={y} o={o} k={k}"
    ok("metric-oracle", "200 randomized (y, o, K) cases, exact agreement")


def test_optimizer_matches_hand_recurrence():
    lr, eps = 0.4, 1e-8
    theta = Tensor(np.array([0.0]), requires_grad=True)
    optimizer = AdaGrad([theta], learning_rate=lr, eps=eps)
    grads, got = [], []
    for _ in range(10):
        g = float(theta.values[0]) - 3.0  # gradient of (theta - 3)^2 / 2
        theta.grad[...] = g
        grads.append(g)
        optimizer.step()
        got.append(float(theta.values[0]))
    want = adagrad_recurrence(0.0, grads, lr, eps)
    worst = max(abs(a - b) for a, b in zip(got, want))
    assert worst <= 1e-12, f"max per-step deviation {worst:.2e}"
    ok("optimizer-oracle", f"10 steps, max deviation {worst:.1e}")


@pytest.fixture(scope="module")
def one_hop_desk_split():
    rule = PlantedRule.one_hop(n_classes=8, seed=0)
    return synth_generate(rule, (2000, 300, 300), n_frames=8, frame_dim=32, seed=0)


def test_learnability_one_hop_planted_task(one_hop_desk_split):
    split = one_hop_desk_split
    baseline = majority_class_rate(split.train + split.valid)
    assert baseline <= 1 / 8 + 0.05, f"majority baseline {baseline:.3f}"

    cfg = ModelConfig(vocab_size=len(split.vocab), n_classes=8, frame_dim=32,
                      embed_dim=16, hidden_dim=16, n_frames=8, reasoning_steps=1,
                      use_attributes=True, max_answer_len=8)
    model = VideoQAModel.initialize(cfg, seed=0)
    started = time.monotonic()
    report = train(model, split, TrainConfig(epochs=30, learning_rate=0.05, seed=0),
                   task="mc")
    elapsed = time.monotonic() - started
    assert report.epochs_run <= 30
    assert report.best_val_accuracy >= 0.90, \
        f"validation accuracy {report.best_val_accuracy:.3f} after {report.epochs_run} epochs"
    assert elapsed < 300.0, f"training took {elapsed:.0f}s"
    ok("learnability-one-hop",
       f"val_accuracy={report.best_val_accuracy:.3f} in {report.epochs_run} epochs, "
       f"{elapsed:.0f}s; majority baseline {baseline:.3f}")


def test_reasoning_depth_ordering_two_hop():
    rule = PlantedRule.two_hop(n_first=3, n_second=3, seed=0)
    split = synth_generate(rule, (500, 150, 150), n_frames=8, frame_dim=16, seed=0)
    base = ModelConfig(vocab_size=len(split.vocab), n_classes=9, frame_dim=16,
                       embed_dim=10, hidden_dim=10, n_frames=8, reasoning_steps=1,
                       max_answer_len=8)
    report = run_ablation(split, base,
                          TrainConfig(epochs=4, learning_rate=0.05, patience=5),
                          variants=("ranl1", "ranl3"), seeds=(0, 1, 2), tasks=("mc",),
                          evaluate_test=False)
    assert all(r.error is None for r in report.runs), [r.error for r in report.runs]
    r1 = report.seed_values("ranl1", "mc", "valid")
    r3 = report.seed_values("ranl3", "mc", "valid")
    med1, med3 = float(np.median(r1)), float(np.median(r3))
    detail = (f"ranl1 per-seed={[round(v, 3) for v in r1]} median={med1:.3f}; "
              f"ranl3 per-seed={[round(v, 3) for v in r3]} median={med3:.3f}")
    print(f"\nreasoning-depth values: {detail}")
    assert med3 >= med1, detail
    ok("reasoning-depth-ordering", detail)


def test_reproducibility_plumbing(tmp_path):
    rule = PlantedRule.one_hop(n_classes=4, seed=5)
    split = synth_generate(rule, (40, 12, 12), n_frames=4, frame_dim=6, seed=5)
    cfg = ModelConfig(vocab_size=len(split.vocab), n_classes=4, frame_dim=6,
                      embed_dim=6, hidden_dim=5, n_frames=4, reasoning_steps=1,
                      max_answer_len=4)

    # bitwise-identical loss curves under a fixed seed
    curves = []
    for _ in range(2):
        model = VideoQAModel.initialize(cfg, seed=3)
        curves.append(train(model, split, TrainConfig(epochs=2, learning_rate=0.05, seed=7),
                            task="mc").loss_curve)
    assert curves[0] == curves[1]

    # checkpoint round trip is prediction-identical
    model = VideoQAModel.initialize(cfg, seed=3)
    train(model, split, TrainConfig(epochs=1, learning_rate=0.05, seed=7), task="mc")
    save_checkpoint(tmp_path / "m.json", model, split.vocab, split.answer_classes)
    loaded, _, _ = load_checkpoint(tmp_path / "m.json")
    for inst in split.valid:
        qa = inst.qa_pairs[0]
        a, _ = model.forward_mc(inst.feature_rows(), inst.attribute_ids, qa.question_ids)
        b, _ = loaded.forward_mc(inst.feature_rows(), inst.attribute_ids, qa.question_ids)
        assert np.array_equal(a.values, b.values)
        toks_a, _ = model.answer_open_ended(inst.feature_rows(), inst.attribute_ids,
                                            qa.question_ids)
        toks_b, _ = loaded.answer_open_ended(inst.feature_rows(), inst.attribute_ids,
                                             qa.question_ids)
        assert toks_a == toks_b

    # dataset generation is byte-deterministic under a fixed seed
    for name in ("a", "b"):
        write_dataset(synth_generate(rule, (20, 6, 6), n_frames=4, frame_dim=6, seed=11),
                      tmp_path / name)
    files_a = sorted((tmp_path / "a").rglob("*"))
    files_b = sorted((tmp_path / "b").rglob("*"))
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        if fa.is_file():
            assert fa.read_bytes() == fb.read_bytes(), fa.name
    ok("reproducibility-plumbing")
