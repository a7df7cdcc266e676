"""Hyperparameter containers and their JSON round-trip."""
import dataclasses
from dataclasses import dataclass, field

from .errors import ContractError

ABLATIONS = ("none", "no_fat", "no_feature_disc")


@dataclass
class TrainConfig:
    lam: float = 10.0
    eps: float = 0.1
    latent_dim: int = 4
    noise_dim: int = 4
    hidden: int = 64
    depth: int = 3
    latent_disc_width: int = 64
    latent_disc_depth: int = 3
    leaky_slope: float = 0.2
    lr: float = 1e-3
    epochs: int = 1000
    batch_size: int = 128
    seed: int = 0
    ablation: str = "none"
    decay_fraction: float = 0.1
    final_ratio: float = 0.1
    prior_fakes: bool = False
    clip_norm: float = 0.0
    sn_power_iters: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self):
        problems = []
        if self.lam < 0:
            problems.append("lam must be >= 0")
        if self.eps <= 0:
            problems.append("eps must be > 0")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        for name in ("latent_dim", "noise_dim", "hidden", "depth", "latent_disc_width",
                     "latent_disc_depth", "sn_power_iters"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.ablation not in ABLATIONS:
            problems.append(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if not 0 < self.decay_fraction <= 1:
            problems.append("decay_fraction must lie in (0, 1]")
        if not 0 < self.final_ratio <= 1:
            problems.append("final_ratio must lie in (0, 1]")
        if problems:
            raise ContractError("; ".join(problems))

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**_checked_keys(cls, data, "train"))


@dataclass
class EvalConfig:
    """Settings for the post-hoc classifier and forecaster."""

    hidden: int = 64
    depth: int = 3
    lr: float = 1e-3
    epochs: int = 1000
    patience: int = 50
    batch_size: int = 128
    train_fraction: float = 0.8
    n_models: int = 3
    n_samples: int = 5

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ContractError("train_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.n_models < 1 or self.n_samples < 1:
            raise ContractError("epochs, batch_size, n_models and n_samples must be >= 1")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**_checked_keys(cls, data, "eval"))


@dataclass
class DataSource:
    """Where training sequences come from: synthetic sines or a CSV file."""

    kind: str = "sines"
    n: int = 1000
    length: int = 100
    amplitude: tuple = (0.5, 1.5)
    frequency: tuple = (1.0, 10.0)
    phase: tuple = (-3.141592653589793, 3.141592653589793)
    data_seed: int = 0
    path: str = ""
    features: list = field(default_factory=list)
    id_column: str = ""
    window: int = 24
    stride: int = 1

    def __post_init__(self):
        if self.kind not in ("sines", "csv"):
            raise ContractError(f"data.kind must be 'sines' or 'csv', got {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ContractError("data.path is required for csv sources")
        self.amplitude = tuple(self.amplitude)
        self.frequency = tuple(self.frequency)
        self.phase = tuple(self.phase)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("amplitude", "frequency", "phase"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data):
        return cls(**_checked_keys(cls, data, "data"))


@dataclass
class RunConfig:
    """Everything a training run needs, stored as one flat JSON object.

    Keys are the union of the TrainConfig and DataSource fields plus
    ``out_dir`` and ``checkpoint_every``; the two field sets are disjoint.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSource = field(default_factory=DataSource)
    out_dir: str = "runs/default"
    checkpoint_every: int = 0

    def to_dict(self):
        out = self.train.to_dict()
        out.update(self.data.to_dict())
        out["out_dir"] = self.out_dir
        out["checkpoint_every"] = self.checkpoint_every
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ContractError(f"config: expected an object, got {type(data).__name__}")
        train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
        data_keys = {f.name for f in dataclasses.fields(DataSource)}
        run_keys = {"out_dir", "checkpoint_every"}
        unknown = sorted(set(data) - train_keys - data_keys - run_keys)
        if unknown:
            raise ContractError(f"config: unknown key(s) {', '.join(unknown)}")
        every = int(data.get("checkpoint_every", 0))
        if every < 0:
            raise ContractError("checkpoint_every must be >= 0")
        return cls(
            train=TrainConfig.from_dict({k: v for k, v in data.items() if k in train_keys}),
            data=DataSource.from_dict({k: v for k, v in data.items() if k in data_keys}),
            out_dir=str(data.get("out_dir", "runs/default")),
            checkpoint_every=every,
        )


def _checked_keys(cls, data, section):
    if not isinstance(data, dict):
        raise ContractError(f"{section}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ContractError(f"{section}: unknown key(s) {', '.join(unknown)}")
    return dict(data)
