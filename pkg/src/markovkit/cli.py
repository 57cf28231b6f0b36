"""Command-line frontend: every computation of the package with JSON I/O.

Reports are canonical JSON (sorted keys, fixed indentation) tagged with a
``schema`` field, so identical commands and seeds reproduce identical bytes.
Exit codes: 0 success, 1 validation problems (bad files, bad flags), 2
numerical-verification failures such as feeding a non-Markov state to
markov-decompose.  Failures emit a machine-readable error object on stderr.

Groupings are written ``A,B|C|D``: groups separated by ``|``, subsystem
labels by commas.  States whose layout has exactly three subsystems default
to one group per subsystem.  The environment variable MARKOVKIT_TOL
overrides the verification tolerance globally; ``--tol`` overrides both.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import string
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import best_rotated_petz
from .cost import cost_bounds, markovianizing_cost
from .kidecomp import ki_decompose
from .markov import is_markov, markov_decompose
from .protocols import (
    conjecture_probe,
    markovianize,
    measurement_protocol,
    verify_lemma1,
    verify_structural_bounds,
)
from .qcore import (
    DEFAULT_TOLS,
    DensityState,
    PureState,
    SystemLayout,
    Tolerances,
    VerificationError,
    parse_grouping,
    qcmi,
    random_pure,
    random_state,
    von_neumann_entropy,
)
from .serialize import (
    SCHEMA,
    dumps_canonical,
    load_state,
    probe_csv,
    save_state,
    state_to_jsonable,
    to_jsonable,
)

__all__ = ["RunConfig", "run", "main"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2

VERIFY_TARGETS = ("lemma1", "appendix-a", "lemma6")


@dataclass
class RunConfig:
    """One parsed invocation; everything run() needs to dispatch."""

    command: str
    state: str | None = None
    split: str | None = None
    cond: str = "B"
    part: str | None = None
    direction: str = "from-bc"
    target: str | None = None
    n: int = 1
    seed: int = 0
    trials: int = 20
    dims: tuple[int, ...] = (2, 2, 2)
    eps: float = 0.0
    rank: int | None = None
    pure: bool = False
    labels: str | None = None
    zeta_trials: int = 4
    jobs: int = 1
    tol: float | None = None
    csv: str | None = None
    save_output: str | None = None
    out: str | None = None


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit(2) on bad flags; code 2 is reserved for
    # verification failures, so usage problems are rerouted to exit 1.
    def error(self, message):
        raise _UsageError(message)


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims {text!r} must be comma-separated integers")
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"dims {text!r} must be positive")
    return dims


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _grouping(config: RunConfig, layout: SystemLayout):
    if config.split is not None:
        groups = parse_grouping(config.split, layout)
        if len(groups) != 3:
            raise ValueError(f"grouping {config.split!r} needs exactly "
                             "three |-separated groups")
        return groups
    if len(layout.labels) == 3:
        return tuple((label,) for label in layout.labels)
    raise ValueError("--split is required unless the state has exactly three subsystems")


def _resolve_tols(config: RunConfig) -> Tolerances:
    value = config.tol
    if value is None:
        env = os.environ.get("MARKOVKIT_TOL")
        if env is not None:
            try:
                value = float(env)
            except ValueError:
                raise ValueError(f"MARKOVKIT_TOL={env!r} is not a number")
    if value is None:
        return DEFAULT_TOLS
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"verification tolerance must be positive and finite, got {value}")
    return dataclasses.replace(DEFAULT_TOLS, verify_tol=value)


def _load(config: RunConfig, tols: Tolerances):
    if config.state is None:
        raise ValueError(f"{config.command} needs a state file")
    try:
        return load_state(config.state, tol=tols.verify_tol)
    except OSError as exc:
        raise ValueError(f"cannot read {config.state}: {exc}")


def _as_density(state) -> DensityState:
    return state.to_density() if isinstance(state, PureState) else state


def _as_pure(state, tols: Tolerances) -> PureState:
    """Accept a vector file, or a density file that is a pure projector."""
    if isinstance(state, PureState):
        return state
    vals, vecs = np.linalg.eigh(state.matrix)
    if 1.0 - vals[-1] > 1e-10:
        raise ValueError("this command needs a pure state; the largest "
                         f"eigenvalue is {vals[-1]:.8f}")
    vec = vecs[:, -1]
    # pin the global phase so equal inputs keep producing equal bytes
    pivot = int(np.argmax(np.abs(vec)))
    vec = vec * np.exp(-1j * np.angle(vec[pivot]))
    return PureState(vec, state.layout, tol=tols.verify_tol)


def _systems(layout: SystemLayout) -> list[dict]:
    return [{"name": name, "dim": dim} for name, dim in layout.subsystems]


def _cmd_info(config: RunConfig, tols: Tolerances) -> dict:
    state = _load(config, tols)
    rho = _as_density(state)
    vals = np.linalg.eigvalsh(rho.matrix)
    cutoff = tols.support_cutoff_rel * max(float(vals[-1]), 0.0)
    return {
        "schema": SCHEMA,
        "kind": "pure" if isinstance(state, PureState) else "density",
        "systems": _systems(state.layout),
        "total_dim": state.layout.total_dim,
        "rank": int(np.sum(vals > cutoff)),
        "entropy_bits": von_neumann_entropy(rho, tols),
        "purity": float(np.real(np.trace(rho.matrix @ rho.matrix))),
    }


def _cmd_qcmi(config: RunConfig, tols: Tolerances) -> dict:
    state = _load(config, tols)
    grouping = _grouping(config, state.layout)
    return {"schema": SCHEMA, "qcmi_bits": qcmi(_as_density(state), grouping, tols)}


def _cmd_ki(config: RunConfig, tols: Tolerances) -> dict:
    state = _load(config, tols)
    part = config.part if config.part is not None else state.layout.labels[0]
    ki = ki_decompose(_as_density(state), part, tols)
    blocks = [{"p": blk.p, "a_l_dim": blk.a_l_dim, "a_r_dim": blk.a_r_dim,
               "omega_rank": blk.omega_rank, "phi_rank": blk.phi_rank}
              for blk in ki.blocks]
    return {"schema": SCHEMA,
            "part": list(ki.part.labels),
            "rest": list(ki.rest.labels),
            "num_blocks": len(blocks),
            "blocks": blocks}


def _cmd_markov_check(config: RunConfig, tols: Tolerances) -> dict:
    report = is_markov(_as_density(_load(config, tols)), config.cond, tols=tols)
    return {"schema": SCHEMA,
            "markov": report.markov,
            "qcmi_bits": report.qcmi_bits,
            "petz_error_from_bc": report.petz_error_from_bc,
            "petz_error_from_ab": report.petz_error_from_ab}


def _cmd_markov_decompose(config: RunConfig, tols: Tolerances) -> dict:
    md = markov_decompose(_as_density(_load(config, tols)), config.cond, tols=tols)
    entries = [{"q": entry.q, "b_l_dim": entry.b_l_dim, "b_r_dim": entry.b_r_dim}
               for entry in md.entries]
    return {"schema": SCHEMA,
            "cond": list(md.b_part.labels),
            "num_blocks": len(entries),
            "entries": entries}


def _cmd_recover(config: RunConfig, tols: Tolerances) -> dict:
    state = _as_density(_load(config, tols))
    grouping = _grouping(config, state.layout)
    direction = config.direction.replace("-", "_")
    assessment = best_rotated_petz(state, grouping, direction=direction, tols=tols)
    return {"schema": SCHEMA,
            "direction": config.direction,
            "family": assessment.mode,
            "t": assessment.t,
            "error": assessment.error,
            "fidelity": assessment.fidelity,
            "candidates": [{"family": mode, "t": t, "error": err}
                           for mode, t, err in assessment.per_candidate]}


def _cmd_cost(config: RunConfig, tols: Tolerances) -> dict:
    state = _load(config, tols)
    grouping = _grouping(config, state.layout)
    try:
        psi = _as_pure(state, tols)
    except ValueError:
        bounds = cost_bounds(_as_density(state), grouping, tols)
        return {"schema": SCHEMA,
                "m_dec_bits": bounds.m_dec_bits,
                "qcmi_lower": bounds.qcmi_lower_bits,
                "upper_known": bounds.upper_known}
    report = markovianizing_cost(psi, grouping, tols)
    return {"schema": SCHEMA,
            "m_dec_bits": report.m_dec_bits,
            "qcmi_lower": report.qcmi_lower_bits,
            "weight_entropy_bits": report.weight_entropy_bits,
            "mean_right_entropy_bits": report.mean_right_entropy_bits}


def _cmd_markovianize(config: RunConfig, tols: Tolerances) -> dict:
    psi = _as_pure(_load(config, tols), tols)
    grouping = _grouping(config, psi.layout)
    run_data = markovianize(psi, grouping, config.n, tols)
    report = {"schema": SCHEMA,
              "n": run_data.n,
              "ensemble_size": run_data.ensemble.size,
              "cost_bits_per_copy": run_data.cost_bits_per_copy,
              "m_dec_bits": run_data.m_dec_bits,
              "qcmi_out": run_data.qcmi_out,
              "recovery_error_from_bc": run_data.recovery_error_from_bc,
              "recovery_error_from_ab": run_data.recovery_error_from_ab}
    if config.save_output is not None:
        save_state(run_data.output, config.save_output)
        report["output_written"] = str(config.save_output)
    return report


def _cmd_measure_sim(config: RunConfig, tols: Tolerances) -> dict:
    psi = _as_pure(_load(config, tols), tols)
    grouping = _grouping(config, psi.layout)
    run_data = measurement_protocol(psi, grouping, config.n, tols=tols,
                                    zeta_trials=config.zeta_trials,
                                    seed=config.seed)
    return {"schema": SCHEMA,
            "n": run_data.n,
            "r_bits": run_data.r_bits,
            "outcomes": len(run_data.probabilities),
            "completeness_deviation": run_data.completeness_deviation,
            "probabilities": to_jsonable(run_data.probabilities),
            "fidelities": to_jsonable(run_data.fidelities),
            "eps_k": to_jsonable(run_data.eps_k),
            "eps_prime_k": to_jsonable(run_data.eps_prime_k),
            "xi_k": to_jsonable(run_data.xi_k),
            "xi_is_estimate": run_data.xi_is_estimate,
            "i_g_bc_av": run_data.i_g_bc_av}


def _cmd_verify(config: RunConfig, tols: Tolerances) -> dict:
    if config.target == "lemma1":
        report = verify_lemma1(config.trials, dims=config.dims, seed=config.seed,
                               tols=tols, jobs=config.jobs)
        failed = [name for name, passed in
                  (("fidelity", report.fidelity_pass),
                   ("qcmi-bound", report.qcmi_bound_pass),
                   ("two-eps", report.two_eps_pass))
                  if passed < report.trials]
        if failed:
            raise VerificationError(
                f"lemma1 checks failed in {', '.join(failed)} "
                f"({report.trials} trials)")
    else:
        report = verify_structural_bounds(config.target, trials=config.trials,
                                          n=config.n, dims=config.dims,
                                          eps=config.eps, seed=config.seed,
                                          tols=tols, jobs=config.jobs)
    payload = to_jsonable(report)
    payload["schema"] = SCHEMA
    payload["target"] = config.target
    return payload


def _cmd_probe(config: RunConfig, tols: Tolerances) -> dict:
    points = conjecture_probe(config.trials, dims=config.dims, seed=config.seed,
                              tols=tols, jobs=config.jobs)
    report = {"schema": SCHEMA,
              "trials": config.trials,
              "dims": list(config.dims),
              "seed": config.seed,
              "points": to_jsonable(points)}
    if config.csv is not None:
        Path(config.csv).write_text(probe_csv(points))
        report["csv_written"] = str(config.csv)
    return report


def _cmd_random_state(config: RunConfig, tols: Tolerances) -> dict:
    dims = config.dims
    if config.labels is not None:
        labels = tuple(p for p in config.labels.split(",") if p)
        if len(labels) != len(dims):
            raise ValueError(f"{len(labels)} labels for {len(dims)} dims")
    else:
        if len(dims) > len(string.ascii_uppercase):
            raise ValueError("too many subsystems for default labels; pass --labels")
        labels = tuple(string.ascii_uppercase[:len(dims)])
    layout = SystemLayout.of(*zip(labels, dims))
    if config.pure:
        state = random_pure(layout, seed=config.seed)
    else:
        state = random_state(layout, rank=config.rank, seed=config.seed)
    # the payload IS a state file, so no schema tag here
    return state_to_jsonable(state)


_COMMANDS = {
    "info": _cmd_info,
    "qcmi": _cmd_qcmi,
    "ki": _cmd_ki,
    "markov-check": _cmd_markov_check,
    "markov-decompose": _cmd_markov_decompose,
    "recover": _cmd_recover,
    "cost": _cmd_cost,
    "markovianize": _cmd_markovianize,
    "measure-sim": _cmd_measure_sim,
    "verify": _cmd_verify,
    "probe-conjecture": _cmd_probe,
    "random-state": _cmd_random_state,
}


def run(config: RunConfig) -> int:
    """Dispatch one invocation; report to stdout or --out, errors to stderr."""
    try:
        handler = _COMMANDS.get(config.command)
        if handler is None:
            raise ValueError(f"unknown command {config.command!r}")
        tols = _resolve_tols(config)
        text = dumps_canonical(handler(config, tols))
    except (ValueError, KeyError) as exc:
        # str(KeyError) wraps the message in quotes; unwrap it
        message = exc.args[0] if exc.args and isinstance(exc.args[0], str) else str(exc)
        _emit_error("validation", message)
        return EXIT_VALIDATION
    except VerificationError as exc:
        _emit_error("verification", str(exc))
        return EXIT_VERIFICATION
    if config.out is not None:
        Path(config.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(dumps_canonical(
        {"schema": SCHEMA, "error": {"type": kind, "message": message}}))


def _add_common(sub, *, state=True, split=False, harness=False):
    if state:
        sub.add_argument("state", help="state file (JSON)")
    if split:
        sub.add_argument("--split", default=None, metavar="A,B|C|D",
                         help="three |-separated label groups; defaults to one "
                              "group per subsystem for three-subsystem states")
    if harness:
        sub.add_argument("--trials", type=_positive_int, default=20)
        sub.add_argument("--dims", type=_parse_dims, default=(2, 2, 2),
                         metavar="D,D,D")
        sub.add_argument("--jobs", type=_positive_int, default=1,
                         help="parallel workers for harness trials")
    sub.add_argument("--tol", type=float, default=None,
                     help="verification tolerance (overrides MARKOVKIT_TOL)")
    sub.add_argument("--out", default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="markovkit",
                     description="Quantum Markov structure toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_common(commands.add_parser("info", help="describe a state file"))

    sub = commands.add_parser("qcmi", help="conditional mutual information I(A:C|B)")
    _add_common(sub, split=True)

    sub = commands.add_parser("ki", help="decomposition of one side of a bipartite state")
    sub.add_argument("--part", default=None, metavar="A[,B]",
                     help="labels of the decomposed side (default: first subsystem)")
    _add_common(sub)

    sub = commands.add_parser("markov-check", help="test I(A:C|B) = 0 for a conditioner")
    sub.add_argument("--cond", default="B", help="conditioning subsystem label")
    _add_common(sub)

    sub = commands.add_parser("markov-decompose",
                              help="block decomposition of a Markov state")
    sub.add_argument("--cond", default="B")
    _add_common(sub)

    sub = commands.add_parser("recover", help="best Petz-family recovery")
    sub.add_argument("--direction", choices=("from-bc", "from-ab"), default="from-bc")
    _add_common(sub, split=True)

    sub = commands.add_parser("cost", help="markovianizing cost of a pure state")
    _add_common(sub, split=True)

    sub = commands.add_parser("markovianize", help="exact finite-n twirl")
    sub.add_argument("-n", type=_positive_int, default=1, help="number of copies")
    sub.add_argument("--save-output", default=None, metavar="FILE",
                     help="also write the twirled state here")
    _add_common(sub, split=True)

    sub = commands.add_parser("measure-sim", help="measurement-based protocol run")
    sub.add_argument("-n", type=_positive_int, default=1)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--zeta-trials", type=_positive_int, default=4,
                     help="search effort for the zeta lower bound")
    _add_common(sub, split=True)

    sub = commands.add_parser("verify", help="run a verification harness")
    sub.add_argument("target", choices=VERIFY_TARGETS)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("-n", type=_positive_int, default=1,
                     help="copies for lemma6")
    sub.add_argument("--eps", type=float, default=0.0,
                     help="marginal perturbation for lemma6 (0 asserts)")
    _add_common(sub, state=False, harness=True)

    sub = commands.add_parser("probe-conjecture",
                              help="recovery-error scatter; no assertion")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--csv", default=None, metavar="FILE",
                     help="also write trial,eps_ab,eps_bc rows here")
    _add_common(sub, state=False, harness=True)

    sub = commands.add_parser("random-state", help="write a reproducible state file")
    sub.add_argument("--dims", type=_parse_dims, default=(2, 2, 2), metavar="D,D,D")
    sub.add_argument("--labels", default=None, metavar="A,B,C")
    sub.add_argument("--rank", type=_positive_int, default=None)
    sub.add_argument("--pure", action="store_true", help="sample a pure state")
    sub.add_argument("--seed", type=int, default=0)
    _add_common(sub, state=False)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {field.name: getattr(args, field.name)
              for field in dataclasses.fields(RunConfig)
              if hasattr(args, field.name)}
    return RunConfig(**values)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    return run(_config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
