"""Experiment configuration: strict JSON schema and conversion to library objects."""

from __future__ import annotations

import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .. import tasks
from ..augment import AugmentSpec, Decoder, NoiseSpec
from ..experiment import Topology, TrainConfig
from ..net import Activation, Loss
from ..numkit import DistSpec
from ..regularize import DropSpec, Granularity, PenaltySpec, ScaleMode

SCHEMA_VERSION = 1
Seed = Annotated[int, Field(ge=0, lt=2**64)]


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Gaussian(Strict):
    kind: Literal["gaussian"] = "gaussian"
    mean: float = 0.0
    stddev: float = Field(1.0, ge=0)

    def build(self) -> DistSpec:
        return DistSpec.gaussian(self.mean, self.stddev)


class Bernoulli(Strict):
    kind: Literal["bernoulli"] = "bernoulli"
    p: float = Field(ge=0, le=1)

    def build(self) -> DistSpec:
        return DistSpec.bernoulli(self.p)


class Uniform(Strict):
    kind: Literal["uniform"] = "uniform"
    lo: float = 0.0
    hi: float = 1.0

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo > self.hi:
            raise ValueError("uniform needs lo <= hi")
        return self

    def build(self) -> DistSpec:
        return DistSpec.uniform(self.lo, self.hi)


Dist = Annotated[Union[Gaussian, Bernoulli, Uniform], Field(discriminator="kind")]


class IdentityDecoder(Strict):
    kind: Literal["identity"] = "identity"
    dim: int = Field(ge=1)


class LinearDecoder(Strict):
    kind: Literal["linear"] = "linear"
    A: list[list[float]]
    c: list[float] | None = None


class LinearNonlinearDecoder(Strict):
    kind: Literal["linear_nonlinear"] = "linear_nonlinear"
    A: list[list[float]]
    c: list[float] | None = None
    activation: Activation = Activation.TANH


class ComposedDecoder(Strict):
    kind: Literal["composed"] = "composed"
    parts: list["DecoderModel"] = Field(min_length=1)


class TaskDecoder(Strict):
    """Use the decoder that ships with a builtin task."""

    kind: Literal["task"] = "task"


DecoderModel = Annotated[
    Union[IdentityDecoder, LinearDecoder, LinearNonlinearDecoder, ComposedDecoder, TaskDecoder],
    Field(discriminator="kind"),
]
ComposedDecoder.model_rebuild()


class TaskModel(Strict):
    name: str | None = None
    path: str | None = None
    params: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.name is None) == (self.path is None):
            raise ValueError("give exactly one of 'name' (builtin task) or 'path' (CSV file)")
        if self.name is not None and self.name not in tasks.BUILTIN:
            raise ValueError(f"unknown builtin task {self.name!r}; choose from {sorted(tasks.BUILTIN)}")
        if self.path is not None and self.params:
            raise ValueError("'params' only applies to builtin tasks")
        return self


class NetworkModel(Strict):
    widths: list[Annotated[int, Field(ge=1)]] = Field(min_length=2)
    activations: list[Activation]

    @model_validator(mode="after")
    def _matching(self):
        if len(self.activations) != len(self.widths) - 1:
            raise ValueError(f"{len(self.widths) - 1} layers need {len(self.widths) - 1} activations")
        return self

    def build(self) -> Topology:
        return Topology(tuple(self.widths), tuple(self.activations))


class PenaltyModel(Strict):
    kind: Literal["l1", "l2"]
    alpha: float = Field(ge=0)
    include_biases: bool = True


class DropModel(Strict):
    p: float = Field(ge=0, le=1)
    granularity: Granularity = Granularity.NEURON
    layer_index: int = Field(0, ge=0)


class TrainModel(Strict):
    epochs: int = Field(ge=0)
    eta: float = Field(0.05, gt=0)
    minibatch_size: int = Field(16, ge=1)
    loss: Loss = Loss.MSE
    penalty: PenaltyModel | None = None
    drop: DropModel | None = None
    augment: bool = False
    mask_granularity: Literal["per_epoch", "per_minibatch"] = "per_minibatch"
    scale_mode: ScaleMode = ScaleMode.RETENTION_P
    sampling: Literal["without_replacement", "with_replacement"] = "without_replacement"


class AugmentationModel(Strict):
    target: Literal["input", "feature", "label"]
    mode: Literal["additive", "multiplicative"] = "additive"
    dist: Dist | None = None
    decoder: DecoderModel | None = None
    label_epsilon: float | None = Field(None, ge=0, lt=1)
    presentation: Literal["fresh", "frozen"] = "fresh"
    frozen_copies: int = Field(1, ge=1)
    keep_originals: bool = True
    count: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _complete(self):
        if self.target == "feature" and self.decoder is None:
            raise ValueError("feature-space augmentation needs a decoder")
        if self.dist is None and not (self.target == "label" and self.label_epsilon is not None):
            raise ValueError("augmentation needs 'dist' (or 'label_epsilon' for label smoothing)")
        return self


class DropoutReductionCheck(Strict):
    name: Literal["dropout_reduction"] = "dropout_reduction"
    n_cases: int = Field(100, ge=1)
    max_dim: int = Field(6, ge=1)


class GradientCheck(Strict):
    name: Literal["gradients"] = "gradients"
    n_nets: int = Field(50, ge=1)
    tol: float = Field(1e-5, gt=0)


class MaskCountCheck(Strict):
    name: Literal["mask_count"] = "mask_count"
    max_units: int = Field(4, ge=0, le=16)


class MemorizerCheck(Strict):
    name: Literal["memorizer_gap"] = "memorizer_gap"
    domains: list[str] = Field(default_factory=lambda: list(tasks.TOY_DOMAINS))

    @field_validator("domains")
    @classmethod
    def _known(cls, v):
        bad = [d for d in v if d not in tasks.TOY_DOMAINS]
        if bad:
            raise ValueError(f"not enumerable toy domains: {bad}")
        return v


class BishopCheck(Strict):
    name: Literal["bishop"] = "bishop"
    w: list[float] = Field(default_factory=lambda: [1.0, 2.0], min_length=1)
    x: list[float] = Field(default_factory=lambda: [1.0, 1.0], min_length=1)
    t: float = 0.0
    sigma: float = Field(0.1, gt=0)
    n_mc: int = Field(100_000, ge=1000)

    @model_validator(mode="after")
    def _dims(self):
        if len(self.w) != len(self.x):
            raise ValueError("w and x must have equal length")
        return self


class DropoutNoiseCheck(Strict):
    name: Literal["dropout_noise"] = "dropout_noise"
    p: float = Field(0.5, ge=0, le=1)
    n_trials: int = Field(10_000, ge=2)
    max_dim: int = Field(4, ge=1)


class L2NoiseCheck(Strict):
    name: Literal["l2_vs_noise"] = "l2_vs_noise"
    sigma: float = Field(0.1, ge=0)
    alpha: float | None = Field(None, ge=0)
    tolerance: float = Field(0.05, gt=0)
    eta: float = Field(0.02, gt=0)
    epochs: int = Field(400, ge=0)
    minibatch_size: int = Field(16, ge=1)


class SchemeCheck(Strict):
    name: Literal["scheme_check"] = "scheme_check"
    n_seeds: int = Field(100, ge=1)


class FeatureNoiseCheck(Strict):
    name: Literal["feature_noise"] = "feature_noise"
    n_seeds: int = Field(10, ge=10)
    mode: Literal["additive", "multiplicative"] = "additive"
    dist: Dist = Gaussian(mean=0.0, stddev=0.3)
    hidden: int = Field(32, ge=1)
    eta: float = Field(0.1, gt=0)
    epochs: int = Field(300, ge=0)
    minibatch_size: int = Field(8, ge=1)


Verification = Annotated[
    Union[
        DropoutReductionCheck, GradientCheck, MaskCountCheck, MemorizerCheck, BishopCheck,
        DropoutNoiseCheck, L2NoiseCheck, SchemeCheck, FeatureNoiseCheck,
    ],
    Field(discriminator="name"),
]
VERIFICATION_NAMES = (
    "dropout_reduction", "gradients", "mask_count", "memorizer_gap", "bishop",
    "dropout_noise", "l2_vs_noise", "scheme_check", "feature_noise",
)


class SweepModel(Strict):
    seeds: list[Seed] = Field(min_length=1)
    overrides: dict[str, list] = Field(default_factory=dict)


class GapModel(Strict):
    model: Literal["trained", "memorizer"] = "trained"


class OutputModel(Strict):
    path: str | None = None
    format: Literal["json", "csv"] = "json"


class ReportModel(Strict):
    include_timing: bool = False


class ExperimentConfig(Strict):
    schema_version: Literal[1]
    seed: Seed = 0
    task: TaskModel
    network: NetworkModel
    train: TrainModel
    augmentation: AugmentationModel | None = None
    gap: GapModel = GapModel()
    verify: list[Verification] = Field(default_factory=list)
    sweep: SweepModel | None = None
    output: OutputModel = OutputModel()
    report: ReportModel = ReportModel()

    @field_validator("verify", mode="before")
    @classmethod
    def _names_to_objects(cls, v):
        if isinstance(v, list):
            return [{"name": item} if isinstance(item, str) else item for item in v]
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.train.drop is not None and self.train.drop.layer_index >= len(self.network.activations):
            raise ValueError("train.drop.layer_index is beyond the last layer")
        if self.train.augment and self.augmentation is None:
            raise ValueError("train.augment is set but no augmentation block is given")
        return self

    # conversion to library objects

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.train
        aug = self.augmentation
        return TrainConfig(
            eta=t.eta,
            epochs=t.epochs,
            minibatch_size=t.minibatch_size,
            seed=self.seed if seed is None else seed,
            loss=t.loss,
            penalty=None if t.penalty is None else PenaltySpec(t.penalty.kind, t.penalty.alpha, t.penalty.include_biases),
            drop=None if t.drop is None else DropSpec(t.drop.p, t.drop.granularity, t.drop.layer_index),
            augmentation=None,
            presentation="fresh" if aug is None else aug.presentation,
            frozen_copies=1 if aug is None else aug.frozen_copies,
            keep_originals=True if aug is None else aug.keep_originals,
            mask_granularity=t.mask_granularity,
            scale_mode=t.scale_mode,
            sampling=t.sampling,
        )

    def augment_spec(self, task_decoder=None) -> AugmentSpec:
        a = self.augmentation
        noise = None if a.dist is None else NoiseSpec(a.mode, a.dist.build())
        decoder = None if a.decoder is None else build_decoder(a.decoder, task_decoder)
        return AugmentSpec(a.target, noise, decoder, a.label_epsilon)


def build_decoder(model, task_decoder=None) -> Decoder:
    if model.kind == "task":
        if task_decoder is None:
            raise ValueError("decoder kind 'task' needs a builtin task with a decoder")
        return task_decoder
    if model.kind == "identity":
        return Decoder.identity(model.dim)
    if model.kind == "linear":
        return Decoder.linear(model.A, model.c)
    if model.kind == "linear_nonlinear":
        return Decoder.linear_nonlinear(model.A, model.c, model.activation)
    return Decoder.composed(*(build_decoder(p, task_decoder) for p in model.parts))


def _path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def validate_config(data) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = []
        for e in exc.errors():
            loc = e["loc"]
            loc = [p for i, p in enumerate(loc) if not (i and _is_union_tag(loc[i - 1], p))]
            errors.append(f"{_path(loc)}: {e['msg']}")
        raise ConfigError(errors) from None


_UNION_TAGS = ("gaussian", "bernoulli", "uniform", "identity", "linear", "linear_nonlinear", "composed", "task")


def _is_union_tag(prev, p) -> bool:
    # pydantic inserts the discriminator value after a union-typed field
    return isinstance(p, str) and (prev in ("dist", "decoder") or isinstance(prev, int)) and (
        p in _UNION_TAGS or p in VERIFICATION_NAMES
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate JSON config text, reporting every problem found."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: invalid JSON ({exc})"]) from None
    return validate_config(data)


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2)
