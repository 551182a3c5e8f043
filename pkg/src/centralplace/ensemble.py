"""Monte Carlo ensembles of long-run equilibria.

Sample ``k`` of the sweep over industry count ``I`` draws everything it needs
from its own Philox stream keyed by ``(master_seed, I, k)``, so results do not
depend on execution order or on the number of worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .economy import DegenerateIndustryError, ModelParams, NumericError
from .solver import SolveDiagnostics, SolverConfig, solve_equilibrium

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy Philox4x64-10 via SeedSequence(entropy=seed, spawn_key=(I, k))"


@dataclass(frozen=True)
class ElasticityPool:
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise ValueError("elasticity pool is empty")
        if np.any(~(v > 1.0)):
            raise ValueError("every elasticity must be > 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    def summary(self) -> dict:
        return {"source": self.source, "count": self.count, "min": self.min, "max": self.max}


def derive_stream(seed: int, I: int, k: int) -> np.random.Generator:
    """Counter-based stream for sample ``k`` at industry count ``I``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(I), int(k)))
    return np.random.Generator(np.random.Philox(ss))


def sample_sigmas(pool: ElasticityPool, I: int, rng: np.random.Generator) -> np.ndarray:
    """``I`` i.i.d. draws with replacement from the pool."""
    if pool.count == 0:
        raise ValueError("elasticity pool is empty")
    return rng.choice(pool.values, size=I, replace=True)


def random_initial(R: int, I: int, H: float, rng: np.random.Generator) -> np.ndarray:
    """Flat-Dirichlet point of the feasible set scaled to mass ``H``; strictly positive."""
    if R < 1 or I < 1 or not H > 0:
        raise ValueError("need R >= 1, I >= 1 and H > 0")
    e = rng.standard_exponential((R, I))
    # exponential draws can be exactly 0 only with negligible probability
    e = np.maximum(e, np.finfo(float).tiny)
    return e / e.sum() * H


@dataclass
class ExperimentConfig:
    R: int = 1024
    H: float = 1000.0
    L: float = 10000.0
    phi: float = 0.6
    beta: float = 1.0
    industries: tuple = (4, 16, 64, 256)
    samples: int = 1000
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Path | None = None
    threads: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        self.industries = tuple(int(i) for i in np.ravel(self.industries))
        if not self.industries or min(self.industries) < 1:
            raise ValueError("industry counts must be >= 1")

    def params(self, sigmas) -> ModelParams:
        return ModelParams(R=self.R, sigmas=tuple(sigmas), H=self.H, L=self.L, phi=self.phi, beta=self.beta)

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "H": self.H,
            "L": self.L,
            "phi": self.phi,
            "beta": self.beta,
            "industries": list(self.industries),
            "samples": self.samples,
            "seed": self.seed,
            "solver": self.solver.to_dict(),
        }


@dataclass
class SampleRecord:
    I: int
    k: int
    seed: int
    sigmas: np.ndarray
    h: np.ndarray | None = None
    diagnostics: SolveDiagnostics | None = None
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.diagnostics is not None and self.diagnostics.converged

    @property
    def name(self) -> str:
        return f"I{self.I:04d}_s{self.k:05d}"

    def metadata(self, cfg: ExperimentConfig, pool: ElasticityPool | None = None) -> dict:
        diag = None
        if self.diagnostics is not None:
            diag = self.diagnostics.to_dict()
            # wall time would break byte-identical reruns
            diag.pop("elapsed", None)
        return {
            "sample": {"I": self.I, "k": self.k, "seed": self.seed, "rng": RNG_ALGORITHM},
            "params": cfg.params(self.sigmas).to_dict() if self.sigmas.size else None,
            "solver": cfg.solver.to_dict(),
            "diagnostics": diag,
            "converged": self.converged,
            "error": self.error,
            "pool": None if pool is None else pool.summary(),
            "version": __version__,
        }


def run_sample(cfg: ExperimentConfig, pool: ElasticityPool, I: int, k: int) -> SampleRecord:
    rng = derive_stream(cfg.seed, I, k)
    sigmas = sample_sigmas(pool, I, rng)
    rec = SampleRecord(I=I, k=k, seed=cfg.seed, sigmas=sigmas)
    try:
        params = cfg.params(sigmas)
        h0 = random_initial(cfg.R, I, cfg.H, rng)
        rec.h, rec.diagnostics = solve_equilibrium(h0, params, cfg.solver)
    except (DegenerateIndustryError, NumericError) as e:
        rec.error = f"{type(e).__name__}: {e}"
    log.info("sample %s converged=%s", rec.name, rec.converged)
    return rec


def _persist(rec: SampleRecord, cfg: ExperimentConfig, pool: ElasticityPool) -> SampleRecord:
    from .fileio import write_equilibrium, write_json

    out = Path(cfg.out_dir)
    try:
        if rec.h is not None:
            write_equilibrium(out / f"{rec.name}.csv", rec.h)
        write_json(out / f"{rec.name}.json", rec.metadata(cfg, pool))
    except OSError as e:
        rec.error = (rec.error + "; " if rec.error else "") + f"I/O: {e}"
    return rec


def _job(args):
    cfg, pool, I, k = args
    rec = run_sample(cfg, pool, I, k)
    if cfg.out_dir is not None:
        rec = _persist(rec, cfg, pool)
    return rec


@dataclass
class EnsembleResult:
    records: list
    summary: dict

    def converged(self, I: int | None = None) -> list:
        return [r for r in self.records if r.converged and (I is None or r.I == I)]


def summarize(records: list, cfg: ExperimentConfig, pool: ElasticityPool) -> dict:
    by_I = {}
    for I in cfg.industries:
        recs = [r for r in records if r.I == I]
        Gs = [r.diagnostics.G for r in recs if r.diagnostics is not None]
        by_I[str(I)] = {
            "samples": len(recs),
            "converged": sum(r.converged for r in recs),
            "not_converged": sum(r.diagnostics is not None and not r.converged for r in recs),
            "errors": sum(r.error is not None for r in recs),
            "G_max": max(Gs) if Gs else None,
            "G_median": float(np.median(Gs)) if Gs else None,
            "iterations_max": max((r.diagnostics.iterations for r in recs if r.diagnostics), default=None),
        }
    return {"config": cfg.to_dict(), "pool": pool.summary(), "rng": RNG_ALGORITHM, "by_I": by_I, "version": __version__}


def run_samples(cfg: ExperimentConfig, pool: ElasticityPool) -> EnsembleResult:
    """Solve every ``(I, k)`` sample; non-converged samples are kept and flagged."""
    jobs = [(cfg, pool, I, k) for I in cfg.industries for k in range(cfg.samples)]
    if cfg.out_dir is not None:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            records = list(ex.map(_job, jobs))
    else:
        records = [_job(j) for j in jobs]
    summary = summarize(records, cfg, pool)
    if cfg.out_dir is not None:
        from .fileio import write_json

        write_json(Path(cfg.out_dir) / "summary.json", summary)
    return EnsembleResult(records=records, summary=summary)


def with_solver(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, solver=replace(cfg.solver, **changes))
