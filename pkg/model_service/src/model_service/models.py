"""Classifier backends behind the service: a rule-based toy model and a
lazily loaded sequence-classification checkpoint.

Both are deterministic. The toy rule is a pure function of the snippet's
identifier names; checkpoint inference runs in eval mode (no dropout)
with a fixed truncation length, and long inputs are truncated here, on
the serving side, never by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from .config import ConfigError, ServiceConfig
from .lexer import identifier_names


@dataclass(frozen=True)
class Item:
    """One classification request item."""

    id: str
    code: str
    language: str


class Model(Protocol):
    def load(self) -> None: ...

    def labels(self) -> list[int]: ...

    def predict(self, items: Sequence[Item]) -> list[int]: ...


class ToyModel:
    """hit_label iff any user-defined identifier in the code is watched."""

    name = "toy"

    def __init__(self, config: ServiceConfig):
        self.watch = config.watch
        self.hit_label = config.hit_label
        self.miss_label = config.miss_label

    def load(self) -> None:
        pass

    def labels(self) -> list[int]:
        return sorted({self.hit_label, self.miss_label})

    def predict(self, items: Sequence[Item]) -> list[int]:
        out = []
        for item in items:
            hit = bool(identifier_names(item.code, item.language) & self.watch)
            out.append(self.hit_label if hit else self.miss_label)
        return out


class CheckpointModel:
    """Sequence-classification checkpoint wrapper.

    transformers and torch are imported only inside load(), so toy-mode
    deployments never need them installed.
    """

    name = "checkpoint"

    def __init__(self, config: ServiceConfig):
        assert config.checkpoint is not None
        self.checkpoint = config.checkpoint
        self.device = config.device
        self.max_length = config.max_length
        self.label_map = config.label_map
        self._tokenizer = None
        self._model = None
        self._torch = None

    def load(self) -> None:
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(self.checkpoint)
        model = AutoModelForSequenceClassification.from_pretrained(self.checkpoint)
        head = int(model.config.num_labels)
        if head != len(self.label_map):
            raise ConfigError(
                f"label_map has {len(self.label_map)} entries but the checkpoint "
                f"head dimension is {head}"
            )
        model.to(self.device)
        model.eval()
        self._model = model

    def labels(self) -> list[int]:
        return list(self.label_map)

    def predict(self, items: Sequence[Item]) -> list[int]:
        assert self._model is not None and self._tokenizer is not None
        torch = self._torch
        encoded = self._tokenizer(
            [item.code for item in items],
            truncation=True,
            max_length=self.max_length,
            padding=True,
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            logits = self._model(**encoded).logits
        indices = logits.argmax(dim=-1).tolist()
        return [self.label_map[i] for i in indices]


def build_model(config: ServiceConfig) -> Model:
    """Pick the backend the configuration asks for (not yet loaded)."""
    if config.mode == "toy":
        return ToyModel(config)
    return CheckpointModel(config)
