"""Command-line front end.

    dpptransfer transfer   --config run.json --out results/
    dpptransfer sample     --config run.json --seed 7 --streams 4 --threads 4
    dpptransfer count-law | verify | tail-sweep | levy

Every run writes ``manifest.json`` next to its outputs with the resolved
config, its SHA-256 hash, the library version and a digest of each file.
Exit codes: 0 ok, 1 validation, 2 tolerance failure, 3 internal error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .countlaw import joint_law, verify_transference
from .errors import DomainError, SizeGuardError, ToleranceError, ValidationError
from .ground import Partition, ladder
from .kernel import SpectralKernel, preset
from .sampling import Sampler, discretize_for_sampling, grid_midpoints, samples_to_csv, samples_to_json
from .tail import CountEvent, TailPlan, downward_martingale_probe, levy_convergence, tail_mixing_sweep
from .transference import build_cell_bases, build_transfer, spectrum_check, transfer

log = logging.getLogger("dpptransfer")

SCHEMA_VERSION = 1
COMMANDS = ("transfer", "sample", "count-law", "verify", "tail-sweep", "levy")
STOCHASTIC = ("sample", "levy")

_TOP_KEYS = {
    "schema_version", "kernel", "partition", "tol", "max_degree", "grid_cells", "sampling_tol",
    "seed", "n_samples", "streams", "blocks", "json_samples", "tail", "levy",
}
_KERNEL_KEYS = {"preset", "params", "file"}
_TAIL_KEYS = {"near", "radii", "method", "event"}
_LEVY_KEYS = {"base_cells", "levels", "factor", "event"}
_EVENT_KEYS = {"cells", "kind", "value"}


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(extra)}")


@dataclass
class RunConfig:
    """Validated run configuration; ``to_dict`` / ``from_dict`` round-trip exactly."""

    kernel: dict
    partition: dict | None = None
    tol: float = 1e-10
    max_degree: int | None = None
    grid_cells: int = 128
    sampling_tol: float = 1e-3
    seed: int | None = None
    n_samples: int = 1000
    streams: int = 1
    blocks: list | None = None
    json_samples: bool = False
    tail: dict | None = None
    levy: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {self.schema_version}")
        _reject_unknown(self.kernel, _KERNEL_KEYS, "kernel")
        if ("preset" in self.kernel) == ("file" in self.kernel):
            raise ValidationError("kernel needs exactly one of 'preset' or 'file'")
        for name in ("tol", "sampling_tol"):
            if not float(getattr(self, name)) > 0:
                raise ValidationError(f"{name} must be positive")
        if int(self.grid_cells) < 1 or int(self.n_samples) < 1 or int(self.streams) < 1:
            raise ValidationError("grid_cells, n_samples and streams must be positive")
        if self.tail is not None:
            _reject_unknown(self.tail, _TAIL_KEYS, "tail")
            if "event" in self.tail:
                _reject_unknown(self.tail["event"], _EVENT_KEYS, "tail.event")
        if self.levy is not None:
            _reject_unknown(self.levy, _LEVY_KEYS, "levy")
            if "event" in self.levy:
                _reject_unknown(self.levy["event"], _EVENT_KEYS, "levy.event")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, _TOP_KEYS, "config")
        if "kernel" not in d:
            raise ValidationError("config needs a 'kernel' entry")
        return cls(**copy.deepcopy(d))

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "kernel": self.kernel}
        for key in sorted(_TOP_KEYS - {"schema_version", "kernel"}):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return copy.deepcopy(out)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def require_seed(self):
        if self.seed is None:
            raise ValidationError("this subcommand is stochastic and needs a seed")
        return int(self.seed)


def load_kernel(desc: dict) -> SpectralKernel:
    if "file" in desc:
        with open(desc["file"]) as fh:
            return SpectralKernel.from_dict(json.load(fh))
    return preset(desc["preset"], **desc.get("params", {}))


def build_partitions(cfg: RunConfig, K: SpectralKernel) -> list:
    desc = cfg.partition
    if desc is None:
        raise ValidationError("this subcommand needs a 'partition'")
    if "uniform" in desc:
        ms = desc["uniform"] if isinstance(desc["uniform"], list) else [desc["uniform"]]
        return [Partition.uniform(K.space, int(m)) for m in ms]
    if desc.get("singletons"):
        return [Partition.singletons(K.space)]
    return [Partition.from_dict(desc)]


def _event(desc: dict | None, default: CountEvent) -> CountEvent:
    if desc is None:
        return default
    return CountEvent(tuple(desc["cells"]), desc.get("kind", "at_least"), int(desc.get("value", 1)))


class Run:
    """Collects output files and writes them with a manifest."""

    def __init__(self, cfg: RunConfig, command: str, out_dir: str, extra=None):
        self.cfg = cfg
        self.command = command
        self.out_dir = out_dir
        self.files = {}
        self.extra = extra or {}

    def stamp(self, payload: dict) -> dict:
        payload = dict(payload)
        payload["config_hash"] = self.cfg.config_hash
        payload["version"] = __version__
        return payload

    def add_json(self, name: str, payload: dict):
        self.files[name] = json.dumps(self.stamp(payload), sort_keys=True, indent=1) + "\n"

    def add_text(self, name: str, text: str):
        self.files[name] = text

    def write(self):
        os.makedirs(self.out_dir, exist_ok=True)
        digests = {}
        for name, text in sorted(self.files.items()):
            data = text.encode()
            with open(os.path.join(self.out_dir, name), "wb") as fh:
                fh.write(data)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest = self.stamp({"command": self.command, "config": self.cfg.to_dict(), "files": digests})
        manifest.update(self.extra)
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def cmd_transfer(cfg: RunConfig, run: Run) -> int:
    K = load_kernel(cfg.kernel)
    P = build_partitions(cfg, K)[0]
    bases = build_cell_bases(K, P, cfg.tol, cfg.max_degree)
    Q = transfer(K, build_transfer(K, bases), cfg.tol)
    sc = spectrum_check(K, Q)
    ver = verify_transference(K, P, Q)
    ok = sc.ok and ver.ok
    run.add_json("Q.json", Q.to_dict())
    run.add_json("report.json", {
        "partition": P.to_dict(),
        "n_basis": [b.n for b in bases],
        "leakage": Q.leakage,
        "tol": cfg.tol,
        "spectrum_discrepancy": sc.discrepancy,
        "spectrum_bound": sc.bound,
        "tv": ver.tv,
        "tv_bound": ver.bound,
        "imag_residue": ver.imag_residue,
        "ok": ok,
    })
    return 0 if ok else 2


def cmd_sample(cfg: RunConfig, run: Run, threads: int = 1) -> int:
    seed = cfg.require_seed()
    K = load_kernel(cfg.kernel)
    if K.space.is_discrete:
        Q = K.matrix()
        mid = None
    else:
        Q = discretize_for_sampling(K, cfg.grid_cells, cfg.sampling_tol).Q
        mid = grid_midpoints(K, cfg.grid_cells)
    sites, sizes = Sampler(Q).draw_streams(seed, int(cfg.n_samples), int(cfg.streams), threads)
    if mid is None:
        run.add_text("samples.csv", samples_to_csv(sites, sizes))
    else:
        lines = [",".join(repr(float(mid[s])) for s in row[:k]) for row, k in zip(sites, sizes)]
        run.add_text("samples.csv", "".join(line + "\n" for line in lines))
    if cfg.json_samples:
        run.add_text("samples.json", samples_to_json(sites, sizes) + "\n")
    return 0


def cmd_count_law(cfg: RunConfig, run: Run) -> int:
    K = load_kernel(cfg.kernel)
    if cfg.blocks is not None:
        law = joint_law(K, [list(b) for b in cfg.blocks])
    else:
        law = joint_law(K, list(build_partitions(cfg, K)[0].cells))
    run.add_text("countlaw.csv", law.to_csv())
    run.add_json("countlaw.json", law.to_dict())
    return 0


def cmd_verify(cfg: RunConfig, run: Run) -> int:
    K = load_kernel(cfg.kernel)
    reports = []
    ok = True
    for P in build_partitions(cfg, K):
        bases = build_cell_bases(K, P, cfg.tol, cfg.max_degree)
        Q = transfer(K, build_transfer(K, bases), cfg.tol)
        ver = verify_transference(K, P, Q)
        sc = spectrum_check(K, Q)
        rep = ver.to_dict()
        rep.update({"partition": P.to_dict(), "spectrum_discrepancy": sc.discrepancy,
                    "spectrum_ok": sc.ok})
        ok = ok and ver.ok and sc.ok
        reports.append(rep)
    run.add_json("verify.json", {"reports": reports, "ok": ok})
    return 0 if ok else 2


def cmd_tail(cfg: RunConfig, run: Run) -> int:
    if cfg.tail is None:
        raise ValidationError("tail-sweep needs a 'tail' section")
    K = load_kernel(cfg.kernel)
    t = cfg.tail
    method = t.get("method", "exact")
    if method not in ("exact", "sampled"):
        raise ValidationError("tail.method must be 'exact' or 'sampled'")
    seed = cfg.require_seed() if method == "sampled" else (cfg.seed or 0)
    plan = TailPlan(K, tuple(t["near"]), tuple(t["radii"]), int(cfg.n_samples), seed)
    sweep = tail_mixing_sweep(plan, method)
    event = _event(t.get("event"), CountEvent(plan.near, "parity", 1))
    down = downward_martingale_probe(plan, event, "exact" if method == "exact" else "empirical")
    run.add_text("sweep.csv", sweep.to_csv())
    run.add_text("downward.csv", down.to_csv())
    run.extra = {"plan": plan.to_dict(), "kernel_preset": cfg.kernel,
                 "sweep_meta": sweep.meta, "downward_meta": down.meta}
    return 0


def cmd_levy(cfg: RunConfig, run: Run, threads: int = 1) -> int:
    seed = cfg.require_seed()
    if cfg.levy is None:
        raise ValidationError("levy needs a 'levy' section")
    K = load_kernel(cfg.kernel)
    lv = cfg.levy
    base = Partition.uniform(K.space, int(lv.get("base_cells", 2)))
    lad = ladder(base, int(lv.get("levels", 3)), int(lv.get("factor", 2)))
    event = _event(lv.get("event"), CountEvent((0,), "at_least", 1))
    res = levy_convergence(K, lad, event, int(cfg.n_samples), seed, cfg.tol, int(cfg.streams), threads)
    run.add_text("levy.csv", res.to_csv())
    run.extra = {"levy_meta": {k: v for k, v in res.meta.items() if k != "starved"},
                 "starved": {str(k): v for k, v in res.meta["starved"].items()}}
    return 0


def _exit_code(exc) -> int:
    if isinstance(exc, ToleranceError):
        return 2
    if isinstance(exc, (ValidationError, DomainError, SizeGuardError, json.JSONDecodeError,
                        FileNotFoundError, KeyError, TypeError)):
        return 1
    return 3


def _error_kind(exc) -> str:
    if isinstance(exc, ToleranceError):
        return exc.kind
    if isinstance(exc, (ValidationError, DomainError, SizeGuardError, json.JSONDecodeError,
                        FileNotFoundError, KeyError, TypeError)):
        return "validation"
    return "internal"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpptransfer", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--streams", type=int, help="RNG substreams (overrides config)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    cfg = None
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.streams is not None:
            raw["streams"] = args.streams
        cfg = RunConfig.from_dict(raw)
        run = Run(cfg, args.command, args.out)
        log.info("config %s", cfg.config_hash)
        if args.command == "transfer":
            code = cmd_transfer(cfg, run)
        elif args.command == "sample":
            code = cmd_sample(cfg, run, args.threads)
        elif args.command == "count-law":
            code = cmd_count_law(cfg, run)
        elif args.command == "verify":
            code = cmd_verify(cfg, run)
        elif args.command == "tail-sweep":
            code = cmd_tail(cfg, run)
        else:
            code = cmd_levy(cfg, run, args.threads)
        run.write()
        return code
    except Exception as exc:  # noqa: BLE001 - mapped onto exit codes
        code = _exit_code(exc)
        err = {"error": _error_kind(exc), "message": str(exc), "exit_code": code,
               "version": __version__}
        if cfg is not None:
            err["config_hash"] = cfg.config_hash
        if isinstance(exc, ToleranceError) and exc.achieved is not None:
            err["achieved"] = exc.achieved
        if code == 3:
            log.exception("internal error")
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "error.json"), "w") as fh:
            fh.write(json.dumps(err, sort_keys=True) + "\n")
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
