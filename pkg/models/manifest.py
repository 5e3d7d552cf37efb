import os
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from config import Config


class BootstrapSettings(BaseModel):
    reps: int = Field(Config.DEFAULT_BOOTSTRAP_REPS, ge=1)
    fraction: float = Field(Config.DEFAULT_BOOTSTRAP_FRACTION, gt=0.0, le=1.0)


class AuditConfig(BaseModel):
    k: int = Field(Config.DEFAULT_K, ge=1)
    top_m: int = Field(Config.DEFAULT_TOP_M, ge=1)
    bootstrap: BootstrapSettings = Field(default_factory=BootstrapSettings)
    seed: Optional[int] = None
    metric: Literal['cosine'] = 'cosine'

    def echo(self):
        return {
            'k': self.k,
            'top_m': self.top_m,
            'bootstrap_reps': self.bootstrap.reps,
            'bootstrap_fraction': self.bootstrap.fraction,
            'seed': self.seed,
            'metric': self.metric,
            'object_scoring': 'similarity_weighted',
            'aucg_sign': 'signed',
            'std_form': 'population',
        }


class AuditManifest(AuditConfig):
    """Files and settings of one audit, as read from `--dataset manifest.json`.

    Relative paths resolve against the manifest's directory.
    """

    split_name: str = 'A'
    public_name: Optional[str] = None
    target_text: str
    reference_text: str
    ground_truth: str
    public_target: str
    public_reference: str
    public_annotations: str
    metadata: dict = Field(default_factory=dict)
    base_dir: str = Field('.', exclude=True)

    @field_validator('target_text', 'reference_text', 'ground_truth',
                     'public_target', 'public_reference', 'public_annotations')
    @classmethod
    def _non_empty(cls, v):
        if not v or not v.strip():
            raise ValueError('path must not be empty')
        return v.strip()

    @model_validator(mode='after')
    def _files_exist(self):
        missing = [name for name, path in self.paths().items() if not os.path.exists(path)]
        if missing:
            raise ValueError(f"missing files for: {', '.join(missing)}")
        return self

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    def paths(self):
        return {
            'target_text': self.resolve(self.target_text),
            'reference_text': self.resolve(self.reference_text),
            'ground_truth': self.resolve(self.ground_truth),
            'public_target': self.resolve(self.public_target),
            'public_reference': self.resolve(self.public_reference),
            'public_annotations': self.resolve(self.public_annotations),
        }

    def audit_config(self):
        return AuditConfig(k=self.k, top_m=self.top_m, bootstrap=self.bootstrap,
                           seed=self.seed, metric=self.metric)
