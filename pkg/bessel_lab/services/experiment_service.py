"""
Experiment runner: resolves configuration, runs a registered experiment and
writes its JSON report and CSV histogram
"""
import json
import logging
from pathlib import Path
from typing import List, Optional

from bessel_lab.config.settings import settings
from bessel_lab.models.schemas import ExperimentConfig, ExperimentSummary
from bessel_lab.services.experiments import EXPERIMENTS, Experiment, get_experiment
from bessel_lab.services.simulation_service import SimulationService

logger = logging.getLogger(__name__)


class ExperimentService:
    """Service for running registered experiments and persisting their artifacts"""

    def list_experiments(self) -> List[Experiment]:
        """Registered experiments sorted by id."""
        return [EXPERIMENTS[key] for key in sorted(EXPERIMENTS)]

    def default_config(self, experiment_id: str) -> ExperimentConfig:
        """Configuration an experiment runs with when no flag or config file sets a field."""
        experiment = get_experiment(experiment_id)
        return ExperimentConfig(experiment_id=experiment_id).model_copy(update=experiment.defaults)

    def resolve_config(self, cfg: ExperimentConfig) -> ExperimentConfig:
        """
        Applies the experiment's own defaults to fields the caller did not set

        Args:
            cfg: Configuration built from flags and config file

        Returns:
            Effective configuration
        """
        experiment = get_experiment(cfg.experiment_id)
        overrides = {
            key: value for key, value in experiment.defaults.items()
            if key not in cfg.model_fields_set
        }
        if overrides:
            logger.info(f"Experiment defaults for {cfg.experiment_id}: {overrides}")
        return cfg.model_copy(update=overrides)

    def run(self, cfg: ExperimentConfig) -> ExperimentSummary:
        """
        Runs one experiment and writes its artifacts

        Args:
            cfg: Experiment configuration

        Returns:
            Summary with every StatReport and the artifact paths

        Raises:
            UsageError: For unknown experiment ids
            NumericError: When a simulation or quadrature fails
        """
        cfg = self.resolve_config(cfg)
        experiment = get_experiment(cfg.experiment_id)
        dump_dir = settings.path_dump_dir if cfg.dump_paths else None
        sim = SimulationService(workers=cfg.workers, dump_dir=dump_dir)

        logger.info(f"🚀 Running {cfg.experiment_id} (mu={cfg.mu}, paths={cfg.n_paths}, seed={cfg.seed})")
        outcome = experiment.runner(cfg, sim)

        summary = ExperimentSummary(
            experiment_id=cfg.experiment_id,
            mu=cfg.mu,
            seed=cfg.seed,
            n_paths=cfg.n_paths,
            reports=outcome.reports,
        )
        summary.artifacts = self.write_artifacts(cfg, summary, outcome.histogram)

        for report in summary.reports:
            marker = "✅" if report.passed else "❌"
            logger.info(
                f"{marker} {cfg.experiment_id} [{report.label}] estimate={report.estimate:.6g} "
                f"target={report.target:.6g} ks={report.ks_distance}"
            )
        return summary

    def write_artifacts(self, cfg: ExperimentConfig, summary: ExperimentSummary, histogram=None) -> List[str]:
        """
        JSON report (schema 1) and optional histogram CSV

        File contents depend only on the configuration, so reruns are byte-identical.
        """
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{cfg.experiment_id}_mu{cfg.mu:g}_seed{cfg.seed}"
        artifacts = []

        if histogram is not None:
            csv_path = out_dir / f"{stem}.csv"
            histogram.to_csv(csv_path, index=False, float_format="%.10g")
            artifacts.append(csv_path.name)

        json_path = out_dir / f"{stem}.json"
        payload = summary.to_json_dict()
        payload["artifacts"] = artifacts
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        artifacts.insert(0, json_path.name)

        logger.info(f"Report written to {json_path}")
        return artifacts


# Global service instance
experiment_service = ExperimentService()
