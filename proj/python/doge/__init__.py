"""Two-stage decoupled GRPO trainer on synthetic verifiable tasks."""

from doge._core import (
    ContractError,
    InvalidInputError,
    IoError,
    NumericError,
    RunConfig,
    eval_checkpoint,
    gradcheck,
    normalize_advantages,
    train,
)

__all__ = [
    "ContractError",
    "InvalidInputError",
    "IoError",
    "NumericError",
    "RunConfig",
    "eval_checkpoint",
    "gradcheck",
    "normalize_advantages",
    "train",
]
