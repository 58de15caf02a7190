"""
Batch simulation engine: fixed partition of the paths into batches, each
with its own counter-based stream, mapped over a process pool
"""
import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, Dict, Iterator, List, Optional

import numpy as np

from bessel_lab.config.settings import settings
from bessel_lab.core.pathsim import (
    PathGrid,
    default_u_budget,
    dump_paths,
    simulate_direct,
    simulate_time_change,
)
from bessel_lab.config.constants import SIM_DEFAULTS
from bessel_lab.models.schemas import BesselParams, Construction, SimConfig

logger = logging.getLogger(__name__)

Reducer = Callable[[PathGrid], Any]


def keep_path(path: PathGrid) -> PathGrid:
    return path


def _run_batch(
    batch: tuple,
    params: BesselParams,
    cfg: SimConfig,
    reducer: Reducer,
    construction: Construction,
    dump_dir: Optional[str],
    t_horizon: float,
    t_steps: Optional[int],
) -> Any:
    """Simulates one batch and reduces it (runs in a worker)."""
    batch_index, n_paths = batch
    if construction == Construction.TIME_CHANGE:
        path = simulate_time_change(params, cfg, t_horizon, t_steps, batch_index, n_paths)
    else:
        path = simulate_direct(params, cfg, batch_index, n_paths)
    if dump_dir:
        dump_paths(path, dump_dir)
    return reducer(path)


class SimulationService:
    """Service running reducers over simulated path batches"""

    def __init__(self, workers: Optional[int] = None, dump_dir: Optional[str] = None):
        self.workers = workers or settings.workers
        self.dump_dir = dump_dir

    def time_change_config(
        self,
        params: BesselParams,
        n_paths: int,
        t_steps: int,
        t_horizon: float,
        seed: int,
        batch_size: int,
    ) -> SimConfig:
        """SimConfig in the u-clock sized for a t-grid of t_steps over t_horizon."""
        return SimConfig(
            n_steps=t_steps * SIM_DEFAULTS["time_change_oversampling"],
            horizon=default_u_budget(params, t_horizon),
            seed=seed,
            n_paths=n_paths,
            batch_size=batch_size,
        )

    def run(
        self,
        params: BesselParams,
        cfg: SimConfig,
        reducer: Reducer,
        construction: Construction = Construction.DIRECT,
        dump_dir: Optional[str] = None,
        t_horizon: float = 1.0,
        t_steps: Optional[int] = None,
    ) -> Dict[str, np.ndarray]:
        """
        Maps a reducer over all batches and concatenates the results in batch order

        Args:
            params: Process parameters
            cfg: Simulation configuration (defines the batch partition)
            reducer: Picklable callable PathGrid -> dict of per-path arrays
            construction: Direct or time-change construction
            dump_dir: Optional directory for per-batch path dumps
            t_horizon: Output horizon of the time-change construction
            t_steps: Output steps of the time-change construction

        Returns:
            Dict of concatenated arrays, identical for any worker count
        """
        batches = list(enumerate(cfg.batch_sizes()))
        task = partial(
            _run_batch,
            params=params,
            cfg=cfg,
            reducer=reducer,
            construction=construction,
            dump_dir=dump_dir or self.dump_dir,
            t_horizon=t_horizon,
            t_steps=t_steps,
        )
        logger.info(
            f"Simulating {cfg.n_paths} paths ({construction.value}, mu={params.mu}) "
            f"in {len(batches)} batches on {self.workers} workers"
        )

        if self.workers == 1 or len(batches) == 1:
            results = [task(b) for b in batches]
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(task, batches))

        logger.info(f"✅ Simulation finished: {cfg.n_paths} paths")
        return self.merge(results)

    def iter_paths(
        self,
        params: BesselParams,
        cfg: SimConfig,
        construction: Construction = Construction.DIRECT,
        t_horizon: float = 1.0,
        t_steps: Optional[int] = None,
    ) -> Iterator[PathGrid]:
        """
        Yields the simulated batches themselves, in batch order

        At most one batch per worker is in flight, so memory stays bounded
        for long grids. Batches are identical to the ones run() reduces.
        """
        batches = list(enumerate(cfg.batch_sizes()))
        task = partial(
            _run_batch,
            params=params,
            cfg=cfg,
            reducer=keep_path,
            construction=construction,
            dump_dir=self.dump_dir,
            t_horizon=t_horizon,
            t_steps=t_steps,
        )
        logger.info(
            f"Streaming {cfg.n_paths} paths ({construction.value}, mu={params.mu}) "
            f"in {len(batches)} batches on {self.workers} workers"
        )

        if self.workers == 1 or len(batches) == 1:
            for batch in batches:
                yield task(batch)
            return

        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            in_flight = deque()
            for batch in batches:
                in_flight.append(pool.submit(task, batch))
                if len(in_flight) >= self.workers:
                    yield in_flight.popleft().result()
            while in_flight:
                yield in_flight.popleft().result()

    @staticmethod
    def merge(results: List[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
        """Concatenates per-batch reductions key by key."""
        if not results:
            return {}
        return {key: np.concatenate([r[key] for r in results]) for key in results[0]}


# Global service instance
simulation_service = SimulationService()
