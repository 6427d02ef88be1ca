"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also echoed with capture disabled, so plain ``-v`` shows them too.
"""
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import central_diff, rel_err
from piatlab.attacks import AttackSpec, evaluate_robust, fgsm, pgd
from piatlab.cli import main
from piatlab.config import build_datasets, load_config
from piatlab.data import make_two_moons
from piatlab.landscape import probe, sample_directions
from piatlab.losses import at_ce_loss, clean_confidence, nmse_from_logits, total_loss, trades_loss
from piatlab.models import ParamVector, build_mlp
from piatlab.piat import LambdaSchedule, interpolate, lambda_at, run_piat
from piatlab.trainer import Evaluator, mean_loss, train_standard


@pytest.fixture
def verdict(capsys):
    def report(n, checks, t0):
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {status}  {time.perf_counter() - t0:.1f}s")
        assert not failed, failed
    return report


def test_c01_interpolation_exactness(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(0)
    a, b = r.standard_normal(5000), r.standard_normal(5000)
    worst = 0.0
    for lam in r.uniform(0, 1, 100):
        out = interpolate(a, b, lam)
        oracle = np.array([lam * ai + (1 - lam) * bi for ai, bi in zip(a.tolist(), b.tolist())])
        worst = max(worst, float(np.max(np.abs(out - oracle))))
    verdict(1, {"oracle 1e-12": worst <= 1e-12,
                "lambda=0 bitwise": np.array_equal(interpolate(a, b, 0.0), b),
                "lambda=1 bitwise": np.array_equal(interpolate(a, b, 1.0), a),
                "under 1s": time.perf_counter() - t0 < 1.0}, t0)


def test_c02_lambda_schedule(verdict):
    t0 = time.perf_counter()
    exact = monotone = True
    for c in (1, 10, 50):
        sched = LambdaSchedule(c=float(c))
        values = [lambda_at(sched, n) for n in range(201)]
        exact &= all(abs(v - float(Fraction(n + 1, n + c))) <= 1e-15 for n, v in enumerate(values))
        if c > 1:
            monotone &= all(x < y for x, y in zip(values, values[1:]))
    limit = all(abs(lambda_at(LambdaSchedule(c=float(c)), 10**12) - 1) < 1e-9 for c in (1, 10, 50))
    verdict(2, {"rational 1e-15": exact, "monotone": monotone, "tends to 1": limit,
                "under 1s": time.perf_counter() - t0 < 1.0}, t0)


def test_c03_fixed_zero_lambda_is_a_no_op(verdict):
    t0 = time.perf_counter()
    cfg = load_config("preset:piat", {"seed": 7, "train.warmup_epochs": 2, "train.adv_epochs": 3})
    train, test = build_datasets(cfg)
    plan = cfg.plan().model_copy(update={"lambda_schedule": LambdaSchedule(kind="FIXED", value=0.0)})
    ev = Evaluator(test, cfg.epoch_attacks(), seed=cfg.eval_seed())
    p1, r1 = run_piat(build_mlp(2, [32, 32], 2, cfg.seed), train, plan, evaluator=ev)
    p2, r2 = train_standard(build_mlp(2, [32, 32], 2, cfg.seed), train,
                            plan.model_copy(update={"lambda_schedule": None}), evaluator=ev)
    same_metrics = [(r.train_loss, r.clean_acc, r.robust_acc) for r in r1] == \
                   [(r.train_loss, r.clean_acc, r.robust_acc) for r in r2]
    verdict(3, {"5 epochs": len(r1) == 5, "params bitwise": np.array_equal(p1.values, p2.values),
                "metrics identical": same_metrics, "under 2min": time.perf_counter() - t0 < 120}, t0)


def test_c04_nmse_properties(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(4)
    zero = scale = bounded = True
    for _ in range(500):
        k = int(r.integers(2, 10))
        z, za = r.standard_normal((6, k)) * r.uniform(0.01, 50), r.standard_normal((6, k))
        y = r.integers(0, k, 6)
        p = clean_confidence(z, y)
        zero &= nmse_from_logits(z, z, y).item() <= 1e-12
        ref = nmse_from_logits(z, za, p_clean=p).item()
        s1, s2 = r.uniform(1e-3, 1e3, 2)
        scale &= abs(nmse_from_logits(s1 * z, za, p_clean=p).item() - ref) <= 1e-10
        scale &= abs(nmse_from_logits(z, s2 * za, p_clean=p).item() - ref) <= 1e-10
        bounded &= 0.0 <= nmse_from_logits(z, za, y).item() <= 4.0
    example = nmse_from_logits([[1.0, 0.0]], [[0.0, 1.0]], y=[0]).item()
    verdict(4, {"zero on identical": zero, "scale invariant": scale, "bounded": bounded,
                "worked example": abs(example - 2 / (math.e + 1)) <= 1e-10}, t0)


def test_c05_gradient_fidelity(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(5)
    model = build_mlp(2, [16, 16], 2, 5)
    x = r.uniform(size=(8, 2))
    x_adv = np.clip(x + r.uniform(-0.1, 0.1, x.shape), 0, 1)
    y = r.integers(0, 2, 8)
    p_fixed = clean_confidence(model.logits(x), y)
    losses = {"AT_CE": lambda: at_ce_loss(model, x_adv, y),
              "TRADES": lambda: trades_loss(model, x, x_adv, y, 6.0),
              "CE_PLUS_NMSE": lambda: total_loss(model, x, x_adv, y, 5.0, p_clean=p_fixed)}
    base = model.get_params().values.copy()
    checks = {}
    for name, make in losses.items():
        model.set_params(base)
        model.zero_grad()
        make().backward()
        analytic = model.flat_grad()

        def f(v):
            model.set_params(v)
            return make().item()

        checks[name] = rel_err(analytic, central_diff(f, base)) < 1e-4
    model.set_params(base)
    checks["under 1min"] = time.perf_counter() - t0 < 60
    verdict(5, checks, t0)


def test_c06_attack_contracts(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(6)
    # (model, input dim, classes)
    models = [(build_mlp(2, [16], 2, s), 2, 2) for s in range(4)] + [(build_mlp(3, [8, 8], 3, 9), 3, 3)]
    inside = True
    for i in range(10_000):
        m, d, n_classes = models[i % len(models)]
        x = r.uniform(0, 1, (4, d))
        y = r.integers(0, n_classes, 4)
        eps = float(r.uniform(0, 0.5))
        family = ("PGD", "MIM", "CW_PGD")[i % 3]
        spec = AttackSpec(family=family, epsilon=eps, step_size=float(r.uniform(0.001, 0.5)),
                          steps=int(r.integers(1, 4)), random_start=bool(r.integers(0, 2)))
        out = pgd(m, x, y, spec, seed=i)
        inside &= bool(np.all(np.abs(out - x) <= eps + 1e-12) and out.min() >= 0 and out.max() <= 1)

    m = build_mlp(2, [16, 16], 2, 1)
    x, y = r.uniform(size=(64, 2)), r.integers(0, 2, 64)
    fgsm_equal = np.array_equal(pgd(m, x, y, AttackSpec(epsilon=0.1, step_size=0.1, steps=1)),
                                fgsm(m, x, y, 0.1))

    lin = build_mlp(5, [], 2, 3)
    w = lin.get_params().slice("dense0.weight")
    x, y = r.uniform(size=(40, 5)), r.integers(0, 2, 40)
    eps, alpha, steps = 0.08, 0.03, 4
    out = pgd(lin, x, y, AttackSpec(epsilon=eps, step_size=alpha, steps=steps))
    direction = np.sign(w[:, 1 - y] - w[:, y]).T
    oracle = np.clip(x + min(steps * alpha, eps) * direction, np.maximum(x - eps, 0), np.minimum(x + eps, 1))
    verdict(6, {"10k invocations in ball": inside, "PGD1 == FGSM": fgsm_equal,
                "linear oracle": float(np.max(np.abs(out - oracle))) <= 1e-12,
                "under 2min": time.perf_counter() - t0 < 120}, t0)


def _early_and_final(preset, seed):
    cfg = load_config(f"preset:{preset}", {"seed": seed})
    train, test = build_datasets(cfg)
    ev = Evaluator(test, cfg.epoch_attacks(), seed=cfg.eval_seed())
    run = train_standard if cfg.train.lambda_schedule is None else run_piat
    _, records = run(build_mlp(2, list(cfg.model.hidden_widths), 2, cfg.seed), train, cfg.plan(), evaluator=ev)
    accs = [rec.robust_acc["PGD-20"] for rec in records if rec.phase == "adv"]
    return statistics.pstdev(accs[:10]), accs[-1]


def test_c07_stability_claim_at_desk_scale(verdict):
    t0 = time.perf_counter()
    steadier = not_worse = 0
    for seed in range(5):
        osc_at, fin_at = _early_and_final("pgd_at", seed)
        osc_pn, fin_pn = _early_and_final("piat_nmse", seed)
        steadier += osc_pn < osc_at
        not_worse += fin_pn >= fin_at
        print(f"seed {seed}: PGD-AT osc {osc_at:.4f} final {fin_at:.3f} | "
              f"PIAT+NMSE osc {osc_pn:.4f} final {fin_pn:.3f}")
    verdict(7, {f"lower oscillation in {steadier}/5 (need 4)": steadier >= 4,
                f"final not worse in {not_worse}/5 (need 3)": not_worse >= 3,
                "under 30min": time.perf_counter() - t0 < 1800}, t0)


def test_c08_adversarial_training_beats_standard(verdict):
    t0 = time.perf_counter()
    # at lr 0.01 neither model leaves the near-linear regime, so nothing separates them;
    # at 0.1 standard training fits the moons and the premise becomes observable
    cfg = load_config("preset:pgd_at", {"seed": 0, "train.lr_schedule.initial": 0.1,
                                         "train.lr_schedule.targets": [0.01, 0.001]})
    train, test = build_datasets(cfg)
    plan = cfg.plan()
    standard = plan.model_copy(update={"warmup_epochs": plan.warmup_epochs + plan.adv_epochs, "adv_epochs": 0})
    pgd20 = AttackSpec(epsilon=0.1, step_size=0.025, steps=20)
    scores = {}
    for name, p in (("at", plan), ("standard", standard)):
        model = build_mlp(2, [32, 32], 2, cfg.seed)
        train_standard(model, train, p)
        scores[name] = evaluate_robust(model, test, pgd20, seed=cfg.eval_seed())
    print(f"PGD-20 robust accuracy: AT {scores['at']:.3f}, standard {scores['standard']:.3f}")
    verdict(8, {"margin >= 0.15": scores["at"] - scores["standard"] >= 0.15,
                "under 10min": time.perf_counter() - t0 < 600}, t0)


def test_c09_landscape_probe(verdict):
    t0 = time.perf_counter()
    data = make_two_moons(300, 0.1, seed=9)
    model = build_mlp(2, [16, 16], 2, 9)
    before = model.get_params().fingerprint()
    u, v = sample_directions(model.layout, 9)
    grid = probe(model, data, u, v, 5, "clean")
    origin = grid.loss[2, 2] == mean_loss(model, data, "clean")
    atk = AttackSpec(epsilon=0.1, step_size=0.025, steps=5, random_start=True)
    adv = probe(model, data, u, v, 3, "adv", attack=atk, seed=2)
    origin &= adv.loss[1, 1] == mean_loss(model, data, "adv", atk, seed=2)

    center = model.get_params().values.copy()
    r = np.random.default_rng(9)
    uq = ParamVector(r.standard_normal(model.n_params), model.layout)
    vq = ParamVector(r.standard_normal(model.n_params), model.layout)
    quad = probe(model, None, uq, vq, 6, lambda m, _: float(np.sum(m.params_view() ** 2)))
    uh, vh = uq.values / np.linalg.norm(uq.values), vq.values / np.linalg.norm(vq.values)
    worst = max(abs(quad.loss[i, j] - float(np.sum((center + a * uh + b * vh) ** 2)))
                for i, a in enumerate(quad.m1) for j, b in enumerate(quad.m2))
    verdict(9, {"origin bitwise": bool(origin), "quadratic 1e-10": worst <= 1e-10,
                "restored": model.get_params().fingerprint() == before,
                "under 1min": time.perf_counter() - t0 < 60}, t0)


def test_c10_preset_rerun_is_byte_identical(verdict, tmp_path, capsys):
    t0 = time.perf_counter()
    codes = [main(["train", "preset:piat_nmse", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    capsys.readouterr()
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("final.ckpt", "metrics.jsonl")}
    verdict(10, {"exit 0": codes == [0, 0], "checkpoint bytes": same["final.ckpt"],
                 "metrics bytes": same["metrics.jsonl"], "under 5min": time.perf_counter() - t0 < 300}, t0)
