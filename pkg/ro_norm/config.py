import hashlib
import itertools
import json
from dataclasses import dataclass, field, asdict, fields, replace
from pathlib import Path

from ro_norm.utils import GrfSpec, PdeRun, LayoutSpec, CASE_KINDS, MappingKind
from ro_norm.utils import ConfigError

ROOT_PATH = Path(__file__).parent.parent
RESULTS_PATH = ROOT_PATH / "results"
DATA_PATH = RESULTS_PATH / "data"
MESH_PATH = ROOT_PATH / "meshes"
CONFIG_PATH = ROOT_PATH / "configs"

SCHEMA_VERSION = 1
METHODS = ("ro_norm", "pca_net", "ro_fc_nn")
RECONSTRUCTIONS = ("online", "offline")
BASIS_FAMILIES = ("pod", "intrinsic")

# JSON keys that differ from the dataclass field names
_TRAIN_ALIASES = {"l_layers": "n_layers"}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 50
    lr: float = 0.01
    step_lr_every: int = 100
    step_lr_gamma: float = 0.5
    reconstruction: str = "online"
    truncated_modes: int = 32
    lmodes: int = 32
    width: int = 16
    n_layers: int = 4
    d_proj: int = 128
    activation: str = "gelu"
    basis_family: str = "pod"
    normalize: bool = False
    hidden_layers: tuple = (256, 256, 256, 256)
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        positive = {
            "batch_size": self.batch_size,
            "lr": self.lr,
            "step_lr_every": self.step_lr_every,
            "truncated_modes": self.truncated_modes,
            "lmodes": self.lmodes,
            "width": self.width,
            "d_proj": self.d_proj,
            "log_every": self.log_every,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.epochs < 0 or self.n_layers < 0:
            raise ConfigError("epochs and n_layers must be non-negative")
        if not 0 < self.step_lr_gamma <= 1:
            raise ConfigError(f"step_lr gamma must lie in (0, 1], got {self.step_lr_gamma}")
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ConfigError(f"Unknown reconstruction: {self.reconstruction}")
        if self.basis_family not in BASIS_FAMILIES:
            raise ConfigError(f"Unknown basis_family: {self.basis_family}")
        if any(h <= 0 for h in self.hidden_layers):
            raise ConfigError(f"hidden layer sizes must be positive: {self.hidden_layers}")

    def lr_at(self, epoch):
        return self.lr * self.step_lr_gamma ** (epoch // self.step_lr_every)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "step_lr" in d:
            step_lr = d.pop("step_lr")
            if not isinstance(step_lr, (list, tuple)) or len(step_lr) != 2:
                raise ConfigError(f"step_lr must be [gamma, every], got {step_lr!r}")
            d["step_lr_gamma"], d["step_lr_every"] = step_lr
        d = {_TRAIN_ALIASES.get(k, k): v for k, v in d.items()}
        return cls(**_known(cls, d, "train"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to generate a dataset, train and evaluate."""

    name: str = "experiment"
    case: str = "heat_ic"
    method: str = "ro_norm"
    mesh: Path = MESH_PATH / "unit_square_17.txt"
    n_train: int = 200
    n_test: int = 50
    seed: int = 0
    repeats: int = 1
    out_dir: Path = RESULTS_PATH
    data_dir: Path = None
    n_jobs: int = 1
    kind: str = None
    train: TrainConfig = field(default_factory=TrainConfig)
    grf: GrfSpec = field(default_factory=GrfSpec)
    run: PdeRun = field(default_factory=PdeRun)
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    sweep: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"Unsupported schema_version {self.schema_version}")
        if self.case not in CASE_KINDS:
            raise ConfigError(f"Unknown case {self.case!r}")
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method {self.method!r}, expected one of {METHODS}")
        if self.kind is not None and _mapping_kind(self.kind) != CASE_KINDS[self.case]:
            raise ConfigError(
                f"case {self.case} is a {CASE_KINDS[self.case].value} mapping, "
                f"not {self.kind}"
            )
        if self.n_train < 1 or self.n_test < 1 or self.repeats < 1:
            raise ConfigError("n_train, n_test and repeats must be positive")
        object.__setattr__(self, "mesh", Path(self.mesh))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.data_dir is not None:
            object.__setattr__(self, "data_dir", Path(self.data_dir))

    @property
    def mapping_kind(self):
        return CASE_KINDS[self.case]

    @property
    def dataset_dir(self):
        """Dataset location, keyed by the generation settings when not set."""
        if self.data_dir is not None:
            return self.data_dir
        return DATA_PATH / f"{self.case}-{_digest(self._data_settings())}"

    def _data_settings(self):
        return {
            "case": self.case,
            "mesh": str(self.mesh),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": self.seed,
            "grf": asdict(self.grf),
            "run": asdict(self.run),
            "layout": asdict(self.layout),
        }

    def with_seed(self, seed):
        """Copy whose training seed is ``seed``, data seed untouched."""
        return replace(self, train=replace(self.train, seed=seed))

    def to_dict(self):
        d = asdict(self)
        for key in ("mesh", "out_dir", "data_dir"):
            d[key] = None if d[key] is None else str(d[key])
        d["train"]["hidden_layers"] = list(d["train"]["hidden_layers"])
        return d


def _mapping_kind(value):
    try:
        return MappingKind(value)
    except ValueError:
        raise ConfigError(
            f"Unknown mapping kind {value!r}, expected one of {[k.value for k in MappingKind]}"
        )


def _known(cls, d, section):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"Unknown keys in {section}: {sorted(unknown)}")
    return d


def _digest(obj):
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def config_hash(config):
    """Short hash of everything that can change a run's numbers."""
    d = config.to_dict()
    for key in ("out_dir", "data_dir", "n_jobs", "name", "sweep", "repeats"):
        d.pop(key)
    return _digest(d)


def _resolve_mesh(mesh, base):
    mesh = Path(mesh)
    for candidate in (mesh, base / mesh, ROOT_PATH / mesh):
        if candidate.exists():
            return candidate.resolve()
    raise ConfigError(f"Mesh file not found: {mesh}")


def config_from_dict(d, base=Path(".")):
    d = dict(d)
    _known(ExperimentConfig, d, "config")
    train = dict(d.get("train", {}))
    train.setdefault("seed", d.get("seed", 0))
    d["train"] = train
    sections = {
        "train": TrainConfig.from_dict,
        "grf": lambda s: GrfSpec(**_known(GrfSpec, s, "grf")),
        "run": lambda s: PdeRun(**_known(PdeRun, s, "run")),
        "layout": lambda s: LayoutSpec(**_known(LayoutSpec, s, "layout")),
    }
    try:
        for key, build in sections.items():
            if key in d:
                if not isinstance(d[key], dict):
                    raise ConfigError(f"{key} must be a mapping, got {d[key]!r}")
                d[key] = build(d[key])
        d["mesh"] = _resolve_mesh(d.get("mesh", MESH_PATH / "unit_square_17.txt"), Path(base))
        return ExperimentConfig(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        # wrong value types, e.g. "epochs": "ten"
        raise ConfigError(f"Invalid config: {e}") from e


def load_config(path):
    """Read an experiment config from JSON.

    Relative mesh paths are resolved against the working directory, then
    the config file's directory, then the repository root.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}")
    d.setdefault("name", path.stem)
    return config_from_dict(d, path.parent)


def expand_sweep(config):
    """Cartesian product of the ``sweep`` lists, one config per member.

    Sweep keys are either experiment keys (``method``) or training keys
    (``truncated_modes``, ``reconstruction``...).
    """
    if not config.sweep:
        return [config]
    keys = list(config.sweep)
    train_names = {f.name for f in fields(TrainConfig)} | set(_TRAIN_ALIASES)
    members = []
    for values in itertools.product(*(config.sweep[k] for k in keys)):
        top, train = {}, {}
        for key, value in zip(keys, values):
            if key in train_names:
                train[_TRAIN_ALIASES.get(key, key)] = value
            elif key in ("method", "case"):
                top[key] = value
            elif key == "seed":
                top["seed"] = train["seed"] = value
            else:
                raise ConfigError(f"Cannot sweep over {key!r}")
        suffix = "-".join(f"{k}={v}" for k, v in zip(keys, values))
        members.append(
            replace(
                config,
                name=f"{config.name}-{suffix}",
                train=replace(config.train, **train),
                sweep={},
                **top,
            )
        )
    return members
