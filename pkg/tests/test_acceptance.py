"""Acceptance suite: one test per headline criterion.

Each test prints a single ``ACCEPTANCE <criterion>: PASS|FAIL`` line with the
measured quantities, then asserts the criterion at its stated tolerance.
"""

import itertools
import time
import warnings

import numpy as np
import pytest

from sfegacn.benchmarks import (detection_benchmark, embedding_benchmark, first_crossing,
                                load_scenario, rollback_benchmark, run_scenario)
from sfegacn.cli import run as cli_run
from sfegacn.detector import kmeans
from sfegacn.gacn import GacnConfig, train_gacn
from sfegacn.nn import DenseNet, loss_and_gradients
from sfegacn.pointwalk import point_walk
from sfegacn.sfe import ClampWarning, bit_width, decode_bits, encode_bits

SEEDS = (0, 1, 2)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


# --------------------------------------------------------------------------


def _random_net(rng):
    n_layers = int(rng.integers(1, 5))
    dims = [int(d) for d in rng.integers(1, 17, size=n_layers + 1)]
    loss = str(rng.choice(["bce", "ce", "mse"]))
    if loss == "ce":
        dims[-1] = max(dims[-1], 2)
    hidden = [str(rng.choice(["sigmoid", "tanh", "linear"])) for _ in range(n_layers - 1)]
    out = {"bce": "sigmoid", "ce": "softmax", "mse": "linear"}[loss]
    net = DenseNet(dims, hidden + [out], seed=int(rng.integers(1 << 31)))
    for b in net.biases:
        b[:] = rng.normal(scale=0.5, size=b.shape)
    X = rng.normal(size=(4, dims[0]))
    if loss == "bce":
        Y = rng.integers(0, 2, size=(4, dims[-1])).astype(float)
    elif loss == "ce":
        Y = np.eye(dims[-1])[rng.integers(0, dims[-1], size=4)]
    else:
        Y = rng.normal(size=(4, dims[-1]))
    return net, X, Y, loss


def test_gradient_correctness(report):
    h = 1e-5
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    n_nets = 20
    for _ in range(n_nets):
        net, X, Y, loss = _random_net(rng)
        _, gw, gb = loss_and_gradients(net, X, Y, loss)
        for params, grads in ((net.weights, gw), (net.biases, gb)):
            for P, G in zip(params, grads):
                for idx in np.ndindex(P.shape):
                    keep = P[idx]
                    P[idx] = keep + h
                    up = loss_and_gradients(net, X, Y, loss)[0]
                    P[idx] = keep - h
                    down = loss_and_gradients(net, X, Y, loss)[0]
                    P[idx] = keep
                    num = (up - down) / (2 * h)
                    rel = abs(G[idx] - num) / max(abs(G[idx]), abs(num), 1e-6)
                    worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 10
    report("gradient-correctness", ok,
           f"{n_nets} nets, max relative error {worst:.2e} < 1e-4, {elapsed:.1f}s < 10s")
    assert ok


def test_embedding_lowers_validation_loss(report):
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        losses = np.array([embedding_benchmark(s) for s in SEEDS])
    elapsed = time.perf_counter() - start
    emb, raw = losses.mean(axis=0)
    ok = emb < raw and elapsed < 300
    report("embedding-few-shot", ok,
           f"mean final val loss embedded {emb:.4f} vs raw {raw:.4f} over seeds {SEEDS}, "
           f"{elapsed:.1f}s < 300s")
    assert ok


def test_rollback_converges_earlier(report):
    start = time.perf_counter()
    crossings = []
    for s in SEEDS:
        runs = rollback_benchmark(s)
        crossings.append((first_crossing(runs["gacn"]), first_crossing(runs["gan"])))
    elapsed = time.perf_counter() - start
    gacn_ok = all(g is not None and g < 2000 for g, _ in crossings)
    later = all(g is not None and (p is None or p > g) for g, p in crossings)
    ok = gacn_ok and later and elapsed < 300
    detail = ", ".join(f"seed {s}: GACN {g} / GAN {p}" for s, (g, p) in zip(SEEDS, crossings))
    report("rollback-convergence", ok,
           f"first iteration with mean evaluator score < 0.5: {detail}; "
           f"GACN within 2000: {gacn_ok}; GAN strictly later: {later}; {elapsed:.1f}s")
    assert ok


def test_augmentation_f1(report):
    start = time.perf_counter()
    results = {r.variant: r for r in run_scenario(load_scenario())}
    elapsed = time.perf_counter() - start
    gacn, gan, none = (results[v].f1 for v in ("gacn", "gan", "none"))
    ok = gacn >= gan - 0.02 and gacn >= none + 0.02 and elapsed < 600
    report("augmentation-f1", ok,
           f"macro-F1 GACN {gacn:.4f}, GAN {gan:.4f}, none {none:.4f}; "
           f"needs GACN >= GAN - 0.02 and GACN >= none + 0.02; {elapsed:.1f}s < 600s")
    assert ok


def test_two_step_detection(report):
    start = time.perf_counter()
    rows = []
    for s in SEEDS:
        rep = detection_benchmark(s)
        rows.append((rep.metrics, rep.baseline_metrics))
    elapsed = time.perf_counter() - start
    checks = [m.tpr >= 0.85 and m.fpr <= 0.10 and m.fpr < b.fpr and m.tpr >= b.tpr
              for m, b in rows]
    ok = all(checks) and elapsed < 600
    detail = "; ".join(f"seed {s}: first step {b.tpr:.3f}/{b.fpr:.3f} -> two-step "
                       f"{m.tpr:.3f}/{m.fpr:.3f} {'ok' if c else 'miss'}"
                       for s, (m, b), c in zip(SEEDS, rows, checks))
    report("two-step-detection", ok, f"TPR/FPR {detail}; {elapsed:.1f}s")
    assert ok


def _exhaustive_inertia(X, q):
    best = np.inf
    for labels in itertools.product(range(q), repeat=len(X)):
        labels = np.asarray(labels)
        total = sum(((X[labels == j] - X[labels == j].mean(0)) ** 2).sum()
                    for j in range(q) if np.any(labels == j))
        best = min(best, total)
    return best


def _walk_oracle(X, start):
    order, seen = [start], {start}
    while len(order) < len(X):
        cur = X[order[-1]]
        cand = min((float(((X[j] - cur) ** 2).sum()), j) for j in range(len(X)) if j not in seen)
        order.append(cand[1])
        seen.add(cand[1])
    return order


def test_oracle_equivalence(report):
    rng = np.random.default_rng(7)
    km_bad = 0
    km_cases = 0
    for n in range(2, 9):
        for q in (1, 2, 3):
            if q > n:
                continue
            for _ in range(3):
                X = rng.normal(size=(n, 2))
                got = kmeans(X, q, seed=int(rng.integers(1000))).inertia
                km_cases += 1
                km_bad += got < _exhaustive_inertia(X, q) - 1e-9
    sep_bad = 0
    for _ in range(5):
        X = np.vstack([rng.normal(scale=0.3, size=(4, 2)), rng.normal(scale=0.3, size=(4, 2)) + 10])
        sep_bad += not np.isclose(kmeans(X, 2, seed=0).inertia, _exhaustive_inertia(X, 2),
                                  rtol=1e-12, atol=1e-12)
    walk_bad = 0
    walk_cases = 0
    for n in (2, 5, 17, 60, 200):
        X = rng.integers(0, 8, size=(n, 3)).astype(float)
        start = int(rng.integers(n))
        got = point_walk(X, ["x"] * n, 5, start=start).visit_order.tolist()
        walk_cases += 1
        walk_bad += got != _walk_oracle(X, start)
    values = rng.integers(0, 2**31, size=10_000)
    width = bit_width(values.max())
    round_trip = bool(np.array_equal(decode_bits(encode_bits(values, width)), values))
    ok = km_bad == 0 and sep_bad == 0 and walk_bad == 0 and round_trip
    report("oracle-equivalence", ok,
           f"kmeans {km_cases - km_bad}/{km_cases} at or above exhaustive optimum, "
           f"{5 - sep_bad}/5 equal on separated data; "
           f"point walk {walk_cases - walk_bad}/{walk_cases} match; "
           f"binarization round trip on 10^4 integers: {round_trip}")
    assert ok


def test_cli_determinism(report, tmp_path):
    data = tmp_path / "data"
    assert cli_run(["synth", "--classes", "4", "--features", "3", "--count", "40",
                    "--separation", "8", "--label-rate", "0.25", "--holdout", "c3",
                    "--out", str(data)]) == 0
    fast_gacn = ["--set", "gacn.iterations=60", "--set", "gacn.noise_dim=3"]
    commands = {
        "synth": ["--classes", "3", "--count", "30", "--label-rate", "0.2"],
        "embed": ["--input", str(data / "synth.csv"), "--embedding-dim", "3", "--epochs", "3"],
        "train-gacn": ["--input", str(data / "labeled.csv"), "--target", "c0",
                       "--iterations", "40", "--noise-dim", "3"],
        "detect": ["--labeled", str(data / "labeled.csv"), "--unlabeled",
                   str(data / "unlabeled.csv"), "--gen-count", "20", *fast_gacn],
        "pointwalk": ["--input", str(data / "synth.csv"), "--window-size", "7"],
        "eval": ["--set", "variants=gacn,gan,none", "--set", "seeds=0", "--set", "shots=3",
                 "--set", "test_count=40", "--set", "gacn.iterations=40",
                 "--set", "classifier.epochs=5"],
    }
    bad = []
    for cmd, args in commands.items():
        first = tmp_path / cmd / "first"
        assert cli_run([cmd, *args, "--seed", "3", "--out", str(first)]) == 0, cmd
        runs = [first]
        for name in ("replay1", "replay2"):
            out = tmp_path / cmd / name
            assert cli_run([cmd, "--manifest", str(first / "manifest.json"),
                            "--out", str(out)]) == 0, cmd
            runs.append(out)
        files = sorted(p.name for p in first.iterdir() if p.name not in ("manifest.json",
                                                                          "eval_timing.csv"))
        for f in files:
            blobs = {(r / f).read_bytes() for r in runs}
            if len(blobs) != 1:
                bad.append(f"{cmd}/{f}")
    # generate replays from the trained model
    model = tmp_path / "train-gacn" / "first" / "gacn.sfeg"
    gen_runs = []
    assert cli_run(["generate", "--model", str(model), "--count", "9", "--seed", "3",
                    "--out", str(tmp_path / "gen" / "first")]) == 0
    for name in ("replay1", "replay2"):
        assert cli_run(["generate", "--manifest", str(tmp_path / "gen" / "first" / "manifest.json"),
                        "--out", str(tmp_path / "gen" / name)]) == 0
    for name in ("first", "replay1", "replay2"):
        gen_runs.append((tmp_path / "gen" / name / "generated.csv").read_bytes())
    if len(set(gen_runs)) != 1:
        bad.append("generate/generated.csv")
    n_cmds = len(commands) + 1
    ok = not bad
    report("cli-determinism", ok,
           f"{n_cmds} subcommands replayed twice from their manifests; "
           f"differing files: {', '.join(bad) or 'none'}")
    assert ok


def test_rollback_unit_property(report):
    rng = np.random.default_rng(11)
    X = np.vstack([rng.normal(size=(40, 2)), rng.normal(size=(40, 2)) + 3])
    y = np.array(["A"] * 40 + ["B"] * 40)
    e_r, eps_r, c_r = 5, 0.02, 0.4
    script = 3.0 + np.cumsum(rng.choice([-0.1, -0.015, 0.0, 0.01], size=120))
    expected = [it for it in range(e_r, len(script))
                if script[it - e_r] - script[it - e_r + 1:it + 1].min() <= eps_r]
    events = []
    cfg = GacnConfig(target_label="A", iterations=len(script), e_r=e_r, eps_r=eps_r, c_r=c_r,
                     cy_b=4, noise_dim=2, hidden=(6,), seed=2)
    models = train_gacn(X, y, cfg, score_fn=lambda it, coo: script[it],
                        on_rollback=lambda it, back, before, after:
                        events.append((back.values, before.values, after.values)))
    fired = models.rollback_iterations
    worst = max((float(np.max(np.abs(after - (back + c_r * (before - back)))))
                 for back, before, after in events), default=0.0)
    ok = fired == expected and bool(events) and worst == 0.0
    report("rollback-property", ok,
           f"{len(fired)} rollbacks, iterations match window-rule oracle: {fired == expected}; "
           f"max deviation from backup + c_r*(current - backup): {worst:.1e}")
    assert ok
