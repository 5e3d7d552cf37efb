from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from models.manifest import AuditConfig


class SyntheticCorpusConfig(BaseModel):
    vocab_size: int = Field(200, ge=1)
    s_min: int = Field(3, ge=1)
    s_max: int = Field(8, ge=1)
    caption_coverage: float = Field(0.5, gt=0.0, le=1.0)
    latent_dim: int = Field(64, ge=1)
    noise_std: float = Field(0.1, ge=0.0)
    zipf_exponent: float = Field(1.0, ge=0.0)
    n_records: int = Field(10000, ge=1)
    seed: int = 0

    @model_validator(mode='after')
    def _scene_range(self):
        if self.s_max < self.s_min:
            raise ValueError(f"s_max ({self.s_max}) < s_min ({self.s_min})")
        return self


class TrainConfig(BaseModel):
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(128, ge=2)
    learning_rate: float = Field(0.05, gt=0.0)
    weight_decay: float = Field(0.0, ge=0.0)
    logit_scale: float = Field(20.0, gt=0.0)
    mask_ratio: float = Field(0.0, ge=0.0, lt=1.0)
    early_stop_epoch: Optional[int] = Field(None, ge=0)
    seed: int = 0
    embed_dim: int = Field(64, ge=1)
    text_hidden: Optional[int] = Field(256, ge=1)
    image_hidden: Optional[int] = Field(None, ge=1)
    loss_direction: Literal['symmetric', 'text_to_image', 'image_to_text'] = 'symmetric'
    optimizer: Literal['sgd', 'adam'] = 'sgd'
    lr_schedule: Literal['constant', 'cosine'] = 'constant'
    warmup_steps: int = Field(0, ge=0)
    momentum: float = Field(0.0, ge=0.0, lt=1.0)

    @property
    def effective_epochs(self):
        if self.early_stop_epoch is None:
            return self.epochs
        return min(self.epochs, self.early_stop_epoch)


class SplitSizes(BaseModel):
    train: int = Field(1000, ge=2)
    public: int = Field(5000, ge=1)
    holdout: int = Field(0, ge=0)


class GridPoint(BaseModel):
    """One training setting of an experiment; unset fields inherit the base TrainConfig."""

    name: Optional[str] = None
    train_size: Optional[int] = Field(None, ge=2)
    overrides: dict = Field(default_factory=dict)

    def label(self):
        if self.name:
            return self.name
        parts = [f"{k}={v}" for k, v in sorted(self.overrides.items())]
        if self.train_size is not None:
            parts.insert(0, f"train_size={self.train_size}")
        return ','.join(parts) or 'default'


class ExperimentConfig(BaseModel):
    name: str = 'experiment'
    corpus: SyntheticCorpusConfig = Field(default_factory=SyntheticCorpusConfig)
    sizes: SplitSizes = Field(default_factory=SplitSizes)
    train: TrainConfig = Field(default_factory=TrainConfig)
    grid: list[GridPoint] = Field(default_factory=lambda: [GridPoint()])
    audit: AuditConfig = Field(default_factory=AuditConfig)
    split_seed: int = 0
    caption_dedup: bool = True
    null_reference: bool = False
    sample_grid: Optional[list[int]] = None
    sample_sort: Literal['min_dist', 'correct_preds'] = 'min_dist'

    @model_validator(mode='after')
    def _grid_overrides(self):
        for point in self.grid:
            unknown = set(point.overrides) - set(TrainConfig.model_fields)
            if unknown:
                raise ValueError(f"grid point {point.label()!r} overrides unknown fields: "
                                 f"{', '.join(sorted(unknown))}")
        return self

    def train_config_for(self, point):
        return TrainConfig.model_validate({**self.train.model_dump(), **point.overrides})

    def max_train_size(self):
        sizes = [p.train_size for p in self.grid if p.train_size is not None]
        return max(sizes + [self.sizes.train])


@dataclass(frozen=True, eq=False)
class SyntheticRecord:
    id: str
    object_set: frozenset
    object_indices: tuple
    image_vector: np.ndarray
    caption_tokens: tuple

    @property
    def caption(self):
        return 'a photo of ' + ' and '.join(self.caption_tokens)
