"""Hyperparameter record shared by every training routine.

One flat record covers all methods; ``for_method`` layers the per-method
defaults from ``METHOD_DEFAULTS`` under explicit overrides.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

METHODS = ("identity", "pca", "kpca", "embedding", "custom_ae", "contractive_ae",
           "beta_vae", "siamese", "hybrid1", "hybrid2")


@dataclass(frozen=True)
class Hyper:
    k: int = 8
    hidden: tuple[int, ...] = (64, 32)
    activation: str = "tanh"
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    gamma: float = 1.0
    lam: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 1.0
    snn_sign: float = 1.0
    kpca_gamma: float = 0.0
    snn_workloads: int = 4
    snn_configs: int = 4
    reg_hidden: tuple[int, ...] = (64, 32)
    reg_epochs: int = 300
    reg_batch_size: int = 32
    reg_lr: float = 3e-3
    finetune: bool = False
    incr_steps: int = 500
    incr_lr: float = 1e-2
    seed: int = 0

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        doc["reg_hidden"] = list(self.reg_hidden)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Hyper":
        return cls().updated(doc)

    def updated(self, changes: dict) -> "Hyper":
        types = {f.name: f.type for f in fields(self)}
        unknown = set(changes) - set(types)
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        coerced = {key: _coerce(key, types[key], value) for key, value in changes.items()}
        return replace(self, **coerced)


def _coerce(key: str, kind: str, value):
    try:
        if kind == "bool":
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes"):
                    return True
                if value.lower() in ("0", "false", "no"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            return str(value)
        if kind.startswith("tuple"):
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ValueError(f"bad value for {key}: {value!r}") from None
    raise ValueError(f"unsupported field type for {key}")


METHOD_DEFAULTS: dict[str, dict] = {
    "identity": {},
    "pca": {},
    "kpca": {},
    "embedding": {"k": 4, "epochs": 300},
    "custom_ae": {"gamma": 1.0, "lam": 0.0},
    "contractive_ae": {"gamma": 1.0, "lam": 1e-3},
    "beta_vae": {"beta": 0.1},
    "siamese": {"alpha": 1.0, "epochs": 100, "lr": 3e-3},
    "hybrid1": {"alpha": 1.0, "gamma": 0.1, "lam": 0.1, "epochs": 150},
    "hybrid2": {"lam": 1.0, "temperature": 1.0},
}


def for_method(method: str, overrides: dict | None = None) -> Hyper:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return Hyper().updated(METHOD_DEFAULTS[method]).updated(overrides or {})
