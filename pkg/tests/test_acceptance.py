"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
even with output capture on.  Criterion 7 trains the demo on every published
seed and takes roughly 15 minutes on one core.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from slrobust import cli, ctc, daecore, gradcheck, media, metrics
from slrobust.toytrain import PUBLISHED_SEEDS, ExperimentConfig, run_experiment

from conftest import make_cslr, make_scenes, tree_bytes
from test_metrics import oracle_edit_distance


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def test_criterion_1_wer_oracle(verdict):
    rng = np.random.default_rng(2024)
    vocab = list("ABCDE")
    t0 = time.perf_counter()
    mismatches = identity_failures = 0
    for _ in range(1000):
        ref = [str(x) for x in rng.choice(vocab, size=int(rng.integers(0, 7)))]
        hyp = [str(x) for x in rng.choice(vocab, size=int(rng.integers(0, 7)))]
        br, _ = metrics.align_edit(ref, hyp)
        mismatches += br.errors != oracle_edit_distance(ref, hyp)
        identity_failures += not (
            br.matches + br.substitutions + br.deletions == len(ref) and br.deletions - br.insertions == len(ref) - len(hyp)
        )
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and identity_failures == 0 and dt < 10
    verdict(1, ok, f"1000 pairs, {mismatches} oracle mismatches, {identity_failures} identity failures, {dt:.2f}s")


def test_criterion_2_ctc_oracle(verdict):
    rng = np.random.default_rng(2025)
    t0 = time.perf_counter()
    worst = 0.0
    n = 0
    while n < 200:
        T, V = int(rng.integers(1, 7)), int(rng.integers(2, 5))
        target = [int(x) for x in rng.integers(1, V, size=int(rng.integers(0, 4)))]
        if ctc.min_frames(target) > T:
            continue
        logits = rng.normal(0, 2, (T, V))
        worst = max(worst, abs(ctc.ctc_loss(logits, target) - ctc.brute_force_ctc(logits, target)))
        n += 1
    mass_err = 0.0
    for T in range(1, 5):
        for V in (2, 3):
            logits = rng.normal(0, 1.5, (T, V))
            classes = {tuple(ctc.collapse(p)) for p in itertools.product(range(V), repeat=T)}
            mass = sum(math.exp(-ctc.ctc_loss(logits, list(c))) for c in classes)
            mass_err = max(mass_err, abs(mass - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and mass_err <= 1e-9 and dt < 30
    verdict(2, ok, f"max |loss - brute| {worst:.2e}, max |mass - 1| {mass_err:.2e}, {dt:.2f}s")


def test_criterion_3_gradient_suite(verdict):
    t0 = time.perf_counter()
    results = gradcheck.run_suite(seed=0, instances=100)
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{r.name} {r.max_rel_err:.1e}/{r.threshold:.0e} (n={r.instances})" for r in results)
    ok = all(r.passed and r.instances >= 100 for r in results) and dt < 60
    verdict(3, ok, f"{detail}; {dt:.1f}s")


def test_criterion_4_benchmark_generator(verdict, tmp_path, capsys):
    from collections import Counter

    manifest = make_cslr(tmp_path / "cslr", 20)
    scenes = make_scenes(tmp_path / "scenes", 10)
    base = ["gen-benchmark", "--cslr-manifest", str(manifest), "--scene-dir", str(scenes), "--seed", "9", "--splits", "1"]
    codes = [cli.main(base + ["--out", str(tmp_path / d), "--jobs", j]) for d, j in (("j1", "1"), ("j4", "4"))]
    rows = [json.loads(x) for x in (tmp_path / "j1" / "split_0" / "manifest.jsonl").read_text().splitlines()]
    counts = Counter(r["scene_class"] for r in rows)
    uniform = len(counts) == 10 and set(counts.values()) == {2}
    identical = tree_bytes(tmp_path / "j1") == tree_bytes(tmp_path / "j4")

    full = make_cslr(tmp_path / "full", 3, mask_value=1.0)
    codes.append(cli.main(["gen-benchmark", "--cslr-manifest", str(full), "--scene-dir", str(scenes), "--splits", "1", "--out", str(tmp_path / "f")]))
    reproduced = all(
        (tmp_path / "f" / "split_0" / vid / src.name).read_bytes() == src.read_bytes()
        for vid in ("vid000", "vid001", "vid002")
        for src in media.list_frames(tmp_path / "full" / "frames" / vid)
    )
    capsys.readouterr()
    ok = codes == [0, 0, 0] and uniform and identical and reproduced
    verdict(4, ok, f"class counts {sorted(counts.values())}, jobs1==jobs4 {identical}, mask=1 reproduces source {reproduced}")


def test_criterion_5_mixup_matting(verdict):
    rng = np.random.default_rng(5)
    mismatched = 0
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(1, 16, size=2))
        sign, scene = rng.uniform(0, 1, (h, w, 3)), rng.uniform(0, 1, (h, w, 3))
        lam = float(rng.uniform(0, 1))
        mismatched += not np.array_equal(
            media.mixup_background(sign, scene, lam), media.composite_matting(sign, scene, np.full((h, w), 1 - lam))
        )
    sign, scene = rng.uniform(0, 1, (8, 8, 3)), rng.uniform(0, 1, (8, 8, 3))
    ends = np.array_equal(media.mixup_background(sign, scene, 0.0), sign) and np.array_equal(media.mixup_background(sign, scene, 1.0), scene)
    verdict(5, mismatched == 0 and ends, f"{mismatched}/200 random frames differ, lambda 0/1 exact {ends}")


def test_criterion_6_loss_identities(verdict):
    rng = np.random.default_rng(6)
    fails = []
    for _ in range(100):
        x = rng.normal(size=(1, int(rng.integers(2, 9))))
        if daecore.sim_pos(x, x)[0] != 0.0:
            fails.append("sim_pos(x,x)")
        if daecore.sim_neg(x, x, 0.5)[0] != 0.5:
            fails.append("sim_neg(x,x,0.5)")
        f = rng.normal(size=(3, 2 * int(rng.integers(1, 5))))
        if daecore.loss_rec(f, f, f, f) != 0.0:
            fails.append("loss_rec(f,f,f,f)")
    for ctc_v, sim, rec, va in [(1.0, 0.5, 0.25, 2.0), (2.0, 0.125, 1.5, 0.75), (0.0, 0.0, 0.0, 3.0)]:
        base = daecore.total_loss(ctc_v, sim, rec, daecore.LossConfig(l_va=va, alpha=0.0))
        for a in (1.0, 2.0, 3.0, 5.0, 25.0):
            if daecore.total_loss(ctc_v, sim, rec, daecore.LossConfig(l_va=va, alpha=a)) != base + a * va:
                fails.append(f"linearity alpha={a}")
    verdict(6, not fails, "all identities exact" if not fails else f"failures: {sorted(set(fails))}")


def test_criterion_7_desk_scale_phenomenon(verdict):
    lines, holds = [], 0
    slowest = 0.0
    for seed in PUBLISHED_SEEDS:
        t0 = time.perf_counter()
        report = run_experiment(ExperimentConfig().with_seed(seed))
        dt = time.perf_counter() - t0
        slowest = max(slowest, dt)
        row = {r["condition"]: r for r in report["conditions"]}
        base, full = row["baseline"], row["BR+DAE"]
        gap_b = base["wer_shifted"] - base["wer_clean"]
        gap_f = full["wer_shifted"] - full["wer_clean"]
        a, b, c = gap_b >= 0.15, gap_f <= 0.5 * gap_b, full["wer_clean"] <= base["wer_clean"] + 0.05
        ok = a and b and c and dt <= 300
        holds += ok
        lines.append(f"seed {seed}: gap baseline {gap_b:.3f} BR+DAE {gap_f:.3f}, clean {base['wer_clean']:.3f}->{full['wer_clean']:.3f}, {dt:.0f}s {'ok' if ok else 'miss'}")
    detail = f"{holds}/{len(PUBLISHED_SEEDS)} seeds hold (need 4), slowest run {slowest:.0f}s; " + "; ".join(lines)
    verdict(7, holds >= 4, detail)


def test_criterion_8_momentum(verdict):
    rng = np.random.default_rng(8)
    worst = 0.0
    for m in (0.5, 0.9, 0.99, 0.999):
        students = rng.normal(size=1000)
        theta0 = float(rng.normal())
        teacher = {"w": np.array(theta0)}
        for s in students:
            teacher = daecore.momentum_update(teacher, {"w": np.array(s)}, m)
        closed = m**1000 * theta0 + (1 - m) * sum(m ** (999 - i) * s for i, s in enumerate(students))
        worst = max(worst, abs(float(teacher["w"]) - closed))
    t, s = {"w": rng.normal(size=4)}, {"w": rng.normal(size=4)}
    ends = np.array_equal(daecore.momentum_update(t, s, 1.0)["w"], t["w"]) and np.array_equal(daecore.momentum_update(t, s, 0.0)["w"], s["w"])
    verdict(8, worst <= 1e-12 and ends, f"max trajectory error {worst:.2e}, endpoints exact {ends}")
