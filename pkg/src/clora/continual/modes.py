from __future__ import annotations

from enum import Enum


class TrainMode(str, Enum):
    FT = "FT"
    CLORA_FT = "CLORA_FT"
    JT = "JT"
    CLORA_JT = "CLORA_JT"
    MIB = "MIB"
    MIB_TL = "MIB_TL"
    CLORA = "CLORA"
    CLORA_REINIT = "CLORA_REINIT"

    @property
    def uses_lora(self) -> bool:
        return self in (TrainMode.CLORA_FT, TrainMode.CLORA_JT, TrainMode.CLORA, TrainMode.CLORA_REINIT)

    @property
    def joint(self) -> bool:
        return self in (TrainMode.JT, TrainMode.CLORA_JT)

    @property
    def distills(self) -> bool:
        """Whether the configured loss hook (background-aware CE + KD) applies."""
        return self in (TrainMode.MIB, TrainMode.MIB_TL, TrainMode.CLORA, TrainMode.CLORA_REINIT)

    @property
    def decoder_only(self) -> bool:
        return self is TrainMode.MIB_TL

    @property
    def reinit_each_task(self) -> bool:
        return self is TrainMode.CLORA_REINIT

    @property
    def joint_reference(self) -> "TrainMode":
        """Joint-training baseline used for the forget score."""
        return TrainMode.CLORA_JT if self.uses_lora else TrainMode.JT

    @classmethod
    def parse(cls, value) -> "TrainMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; choose from {[m.value for m in cls]}") from None
