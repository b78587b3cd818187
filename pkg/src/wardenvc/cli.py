"""Command-line front end.

    wardenvc sim --scenario collusion_double_state --seed 7
    wardenvc suite balance --runs 200
    wardenvc game closing --knows=false
    wardenvc game subgame1 --f 3 --sweep 1000
    wardenvc sweep --scenario bob_offline --seed 1 --horizons 10,50,200
    wardenvc dump --scenario honest_optimistic --seed 0

Exit status is 0 exactly when every enabled check passes. Reports go to
stdout and, when an output directory is given (or WARDENVC_OUT is set), to
files in that directory.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import gametheory as gt
from . import scenarios as sc

OUT_ENV = "WARDENVC_OUT"


class Report:
    """Ordered list of named checks plus free-form details."""

    def __init__(self, title: str):
        self.title = title
        self.checks: list[dict] = []
        self.details: dict = {}

    def check(self, name: str, ok: bool, tag: str, info=None):
        self.checks.append({"check": name, "pass": bool(ok), "tag": tag, **({"info": info} if info is not None else {})})

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def text(self) -> str:
        lines = [self.title]
        for k, v in self.details.items():
            if isinstance(v, str) and "\n" in v:
                lines.append(f"{k}:")
                lines += ["  " + l for l in v.rstrip("\n").split("\n")]
            else:
                lines.append(f"{k}: {v}")
        for c in self.checks:
            extra = f"  ({c['info']})" if "info" in c else ""
            lines.append(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['check']} <{c['tag']}>{extra}")
        lines.append("ok" if self.ok else "FAILED")
        return "\n".join(lines) + "\n"

    def machine(self) -> str:
        body = {"title": self.title, "ok": self.ok, "checks": self.checks, "details": self.details}
        return json.dumps(body, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x, key=str) if isinstance(x, (set, frozenset)) else list(x)
    return str(x)


def _out_dir(args) -> Path | None:
    d = args.out or os.environ.get(OUT_ENV)
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, rep: Report, stem: str, extra: dict[str, str] | None = None) -> int:
    text = rep.machine() if args.format == "machine" else rep.text()
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        (out / f"{stem}.json").write_text(rep.machine())
        for name, content in (extra or {}).items():
            (out / name).write_text(content)
    return 0 if rep.ok else 1


# ---------------------------------------------------------------------------
# sim / dump / sweep


def _config(args) -> sc.ScenarioConfig:
    cfg = sc.resolve_scenario(args.scenario, f=args.f, seed=args.seed, hops=args.hops)
    if args.horizon is not None:
        cfg = replace(cfg, horizon=args.horizon)
    if "cross-check" in (args.ablate or []):
        cfg = replace(cfg, crosscheck=False)
    return cfg


def _scenario_checks(rep: Report, r: sc.ExecutionReport):
    rep.check("balance security", sc.check_balance_security(r), "balance-security", {k: v for k, v in r.loss.items() if v > 0} or None)
    rep.check("liveness", sc.check_liveness(r), "liveness")
    rep.check("same-state closure", sc.same_state_closure(r), "same-state-closure")
    rep.check("no invariant violations", not r.violations, "invariants", r.violations or None)


def cmd_sim(args) -> int:
    cfg = _config(args)
    sim = sc.Simulation(cfg)
    r = sim.run()
    rep = Report(f"sim {cfg.name} seed={cfg.seed} f={cfg.f} hops={cfg.hops}")
    rep.details = {
        "final": r.final,
        "entitled": r.entitled,
        "closures": {cid: {"seq": c["ws_seq"], "ws": c["ws"], "phase": c["phase"]} for cid, c in r.closures.items()},
        "trace_digest": r.trace_digest,
    }
    _scenario_checks(rep, r)
    trace = "".join(rec.line() + "\n" for rec in sim.net.trace)
    return _emit(args, rep, "report", {"trace.jsonl": trace})


def cmd_dump(args) -> int:
    cfg = _config(args)
    sim = sc.Simulation(cfg)
    sim.run()
    what = args.what
    if what == "trace":
        for rec in sim.net.trace:
            sys.stdout.write(rec.line() + "\n")
    else:
        for b in sim.ledger.dump():
            sys.stdout.write(json.dumps(b, sort_keys=True, default=_jsonable) + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    hs = [int(x) for x in args.horizons.split(",")]
    results = sc.h_sweep(cfg, hs)
    rep = Report(f"sweep {cfg.name} seed={cfg.seed} H={hs}")
    for h, r in results.items():
        rep.check(f"H={h} liveness", sc.check_liveness(r), "liveness")
        rep.check(f"H={h} balance security", sc.check_balance_security(r), "balance-security")
    keys = {sc.outcome_key(r) for r in results.values()}
    rep.check("outcome independent of H", len(keys) == 1, "liveness")
    return _emit(args, rep, "sweep")


# ---------------------------------------------------------------------------
# suites

SUITES = {
    "same-state": ("same-state-closure", sc.same_state_check),
    "balance": ("balance-security", sc.balance_check),
    "liveness": ("liveness", sc.liveness_check),
}


def cmd_suite(args) -> int:
    tag, check = SUITES[args.name]
    fs = [int(x) for x in args.fs.split(",")]
    if args.name == "same-state":
        configs = (c for f in fs for c in sc.same_state_configs(f, args.runs, args.seed, hops=args.hops))
    else:
        configs = sc.balance_configs(args.runs, args.seed, fs, hops=args.hops)
    if "cross-check" in (args.ablate or []):
        configs = (replace(c, crosscheck=False) for c in configs)
    res = sc.run_suite(args.name, configs, check)
    rep = Report(f"suite {args.name} runs={res.runs} f={fs} hops={args.hops}")
    rep.details = {"covered": res.covered, "failures": [{k: f[k] for k in ("scenario", "seed", "f")} for f in res.failures]}
    rep.check(f"{args.name} holds in every run", res.ok, tag, f"{res.runs - len(res.failures)}/{res.runs}")
    return _emit(args, rep, f"suite-{args.name}")


# ---------------------------------------------------------------------------
# games


def _params(args, regime=True) -> gt.GameParams:
    f = args.f
    if getattr(args, "d_exceeds_collateral", False):
        c = args.c or 1
        v = args.v or (f + 1) * c + 5
        d = args.d or v
        return gt.GameParams(Fraction(args.alpha), Fraction(args.eps), d, args.k, c, f, v, Fraction(args.p1))
    v = args.v or 10
    c = args.c or v // (f + 1) + 1
    d = args.d or max(1, v // 2)
    return gt.GameParams(Fraction(args.alpha), Fraction(args.eps), d, args.k, c, f, v, Fraction(args.p1))


def _solve_check(rep: Report, g: gt.Efg, brute: bool):
    ref = gt.solve(g)
    if brute:
        try:
            bf = gt.brute_force_spne(g)
        except ValueError as e:
            rep.check("brute-force oracle", False, "oracle", str(e))
            return ref
        rep.check("brute-force oracle agrees", bf == ref, "oracle")
    return ref


def cmd_game(args) -> int:
    kind = args.game
    if kind == "subgame1" and args.sweep:
        return _subgame_sweep(args)
    try:
        p = _params(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    rep = Report(f"game {kind} f={p.f} alpha={p.alpha} eps={p.eps} d={p.d} k={p.k} c={p.c} v={p.v}")
    rep.details["regime"] = "(f+1)c > v >= d" if p.in_regime else "outside (f+1)c > v >= d"
    if kind == "closing":
        g = gt.build_closing_game(p, args.knows)
        eq = _solve_check(rep, g, args.brute_force)
        if not args.knows:
            nfg = gt.to_nfg(g)
            rep.details["normal form"] = gt.format_nfg(nfg)
            rep.check("(Old, Ignore) is an equilibrium", gt.JointStrategy.of({"B": "Old", "I|request": "Ignore"}) in eq, "closing-imperfect")
        else:
            und = gt.undominated_spne(g)
            rep.details["undominated SPNE"] = sorted(str(s) for s in und)
            rep.check(
                "undominated SPNE play New with Agree or Ignore",
                bool(und) and all(s["B"] == "New" and s["I|New"] in ("Agree", "Ignore") for s in und),
                "closing-perfect",
            )
        rep.details["equilibria"] = sorted(f"{s} -> {tuple(str(x) for x in gt.play(g, s))}" for s in eq)
        rep.check("every party gets at least alpha - eps", gt.check_security(p), "game-security")
    elif kind == "subgame1":
        g = gt.build_subgame1(p)
        eq = _solve_check(rep, g, args.brute_force)
        rep.details["SPNE"] = sorted(str(s) for s in eq)
        if args.d_exceeds_collateral:
            cheat = gt.cheating_spne(p)
            rep.details["cheating SPNE"] = sorted(str(s) for s in cheat)
            rep.check("cheating SPNE exists when d > (f+1)c", p.d > (p.f + 1) * p.c and bool(cheat), "negative-regime")
        else:
            rep.check("warden bloc publishes the latest state in every SPNE", gt.bloc_honest_in_spne(p), "warden-regime")
    elif kind == "opening":
        rep.check("honest opening is the only safe choice", gt.check_opening_game(p), "opening")
    elif kind == "multihop":
        two = gt.build_closing_game(p, args.knows)
        for hops in range(3, args.hops_max + 1):
            g = gt.build_multihop_closing_game(p, hops, args.knows)
            rep.check(f"{hops}-hop game reduces to the 2-hop game", gt.isomorphic(gt.reduce_dummies(g), two), "multihop")
    if args.tree:
        g = {
            "closing": lambda: gt.build_closing_game(p, args.knows),
            "subgame1": lambda: gt.build_subgame1(p),
            "multihop": lambda: gt.build_multihop_closing_game(p, 3, args.knows),
        }.get(kind)
        if g is not None:
            rep.details["tree"] = gt.dump_game(g())
    return _emit(args, rep, f"game-{kind}")


def _subgame_sweep(args) -> int:
    rng = random.Random(args.seed)
    neg = args.d_exceeds_collateral
    held = agree = 0
    for _ in range(args.sweep):
        p = gt.sample_params(rng, f=args.f, regime=not neg)
        held += bool(gt.cheating_spne(p)) if neg else gt.bloc_honest_in_spne(p)
        if args.brute_force:
            g = gt.build_subgame1(p)
            agree += gt.brute_force_spne(g) == gt.solve(g)
    rep = Report(f"game subgame1 sweep f={args.f} samples={args.sweep}")
    label = "cheating SPNE present" if neg else "regime holds"
    rep.details[label] = f"{held}/{args.sweep}"
    rep.check(label, held == args.sweep, "negative-regime" if neg else "warden-regime", f"{held}/{args.sweep}")
    if args.brute_force:
        rep.check("brute-force oracle agrees", agree == args.sweep, "oracle", f"{agree}/{args.sweep}")
    return _emit(args, rep, "game-subgame1-sweep")


# ---------------------------------------------------------------------------
# parser


def _bool(s: str) -> bool:
    s = s.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {s!r}")


def _positive(s: str) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wardenvc", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
    sub = ap.add_subparsers(dest="cmd", required=True)

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", required=True, help="canned scenario name or JSON scenario file")
    scen.add_argument("--f", type=_positive, default=1)
    scen.add_argument("--hops", type=int, default=2)
    scen.add_argument("--horizon", type=_positive)
    scen.add_argument("--ablate", action="append", choices=("cross-check",))

    p = sub.add_parser("sim", parents=[common, scen], help="run one scenario")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("dump", parents=[common, scen], help="print the trace or the chain of one run")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("what", nargs="?", choices=("trace", "chain"), default="trace")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("sweep", parents=[common, scen], help="rerun a scenario across censorship horizons")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizons", default="10,50,200")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("suite", parents=[common], help="randomized property suite")
    p.add_argument("name", choices=sorted(SUITES))
    p.add_argument("--runs", type=_positive, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", default="1,2,3")
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--ablate", action="append", choices=("cross-check",))
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("game", parents=[common], help="build and solve a game")
    p.add_argument("game", choices=("closing", "subgame1", "opening", "multihop"))
    p.add_argument("--knows", type=_bool, default=True, help="Ingrid can tell an old request from the latest one")
    p.add_argument("--f", type=_positive, default=3)
    p.add_argument("--alpha", default="10")
    p.add_argument("--eps", default="1")
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--c", type=int)
    p.add_argument("--v", type=int)
    p.add_argument("--p1", default="1")
    p.add_argument("--sweep", type=int, default=0, help="sample this many parameter sets (subgame1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-exceeds-collateral", action="store_true", help="use the regime d > (f+1)c")
    p.add_argument("--brute-force", action="store_true", help="also run the brute-force oracle")
    p.add_argument("--hops-max", type=int, default=5)
    p.add_argument("--tree", action="store_true", help="print the game tree")
    p.set_defaults(func=cmd_game)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except sc.ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
