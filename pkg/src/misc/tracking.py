from typing import Optional

import wandb


class RunTracker:
    """
    Thin wrapper over Weights & Biases. Everything is a no-op unless the config
    enables logging, so library code can call it unconditionally.
    """

    def __init__(self, config: dict, job_type: str = "solve") -> None:
        self.enabled = bool(config.get("logging", False))
        self.run = None
        if self.enabled:
            self.run = wandb.init(
                project=config.get("wandb_project", "choquard"),
                config=config,
                job_type=job_type,
                reinit=True,
            )

    def log(self, metrics: dict, step: Optional[int] = None) -> None:
        if self.enabled:
            wandb.log(metrics, step=step)

    def iteration_callback(self, iteration: int, metrics: dict) -> None:
        self.log(metrics, step=iteration)

    def summary(self, metrics: dict) -> None:
        if self.enabled:
            for key, value in metrics.items():
                self.run.summary[key] = value

    def finish(self) -> None:
        if self.enabled:
            wandb.finish()
            self.run = None
