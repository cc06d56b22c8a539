"""NIC capacity profiles, UAR structure constants and the TLB hashing model.

A profile only describes capacities.  The mutable bookkeeping of a live NIC
(how many UAR pages, QPs and CQs are already handed out) lives in
:class:`verbsim.verbs.Device`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import jsonschema

from .errors import UnknownProfile

CACHE_LINE_BYTES = 64

# Slot layout of one mlx5 UAR page: slots 0 and 1 take doorbells and
# BlueFlame writes from user space, slots 2 and 3 belong to the hardware.
DATAPATH_SLOTS = (0, 1)
RESERVED_SLOTS = (2, 3)


@dataclass(frozen=True)
class DeviceProfile:
    """Capacity constants of one adapter model.

    ``has_uuars=False`` marks a capacity-only profile (Omni-Path) whose
    registers have no UAR/uUAR substructure; ``total_uars`` then counts
    independent hardware contexts.
    """

    name: str
    total_uars: int
    datapath_uuars_per_uar: int = 2
    total_uuar_slots_per_uar: int = 4
    uar_page_bytes: int = 4096
    default_static_uuars_per_ctx: int = 16
    default_low_latency_uuars: int = 4
    max_dynamic_uars_per_ctx: int = 512
    max_independent_paths_per_ctx: int = 256
    max_qps: int = 262_000
    max_cqs: int = 16_000_000
    max_inline_bytes: int = 60
    tlb_engines: int = 8
    bf_registers: Optional[int] = None
    db_registers: Optional[int] = None
    has_uuars: bool = True

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("name", "has_uuars") or value is None:
                continue
            if value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value}")
        if self.has_uuars:
            if self.total_uuar_slots_per_uar != 4 or self.datapath_uuars_per_uar != 2:
                raise ValueError("an mlx5 UAR page has 4 uUAR slots, 2 of them datapath")

    @property
    def datapath_registers(self) -> int:
        """Hardware registers usable by software for posting."""
        if self.bf_registers is not None and self.db_registers is not None:
            return self.bf_registers + self.db_registers
        if not self.has_uuars:
            return self.total_uars
        return self.total_uars * self.datapath_uuars_per_uar

    def to_dict(self) -> dict:
        return asdict(self)


CONNECTX4 = DeviceProfile(name="connectx4", total_uars=8168)
CONNECTX3 = DeviceProfile(
    name="connectx3",
    total_uars=1011,
    bf_registers=8088,
    db_registers=1011,
)
OMNIPATH = DeviceProfile(name="omnipath", total_uars=160, has_uuars=False)

_BUILTIN = {p.name: p for p in (CONNECTX4, CONNECTX3, OMNIPATH)}


def _profile_schema() -> dict:
    text = resources.files("verbsim.schemas").joinpath("profile.schema.json").read_text()
    return json.loads(text)


def profile_from_dict(data: Mapping[str, Any]) -> DeviceProfile:
    jsonschema.validate(dict(data), _profile_schema())
    return DeviceProfile(**data)


def load_profile(path: Union[str, Path]) -> DeviceProfile:
    with open(path) as fh:
        return profile_from_dict(json.load(fh))


def builtin_profile(name: str, source: Union[str, Path, Mapping, None] = None,
                    **overrides) -> DeviceProfile:
    """Return a named adapter profile.

    ``custom`` builds a profile from ``source`` (a JSON file path or a
    mapping using the :class:`DeviceProfile` field names) and/or keyword
    overrides applied on top of the ConnectX-4 defaults.
    """
    key = name.lower()
    if key == "custom":
        base = {k: v for k, v in CONNECTX4.to_dict().items()}
        base["name"] = "custom"
        if source is not None:
            if isinstance(source, Mapping):
                loaded = dict(source)
            else:
                with open(source) as fh:
                    loaded = json.load(fh)
            base.update(loaded)
        base.update(overrides)
        return profile_from_dict(base)
    try:
        profile = _BUILTIN[key]
    except KeyError:
        raise UnknownProfile(name) from None
    return replace(profile, **overrides) if overrides else profile


def max_contexts(profile: DeviceProfile, uars_per_ctx: int) -> int:
    if uars_per_ctx < 1:
        raise ValueError("uars_per_ctx must be at least 1")
    return profile.total_uars // uars_per_ctx


def tlb_engine(address: int, engines: int) -> int:
    """Translation engine that serves a DMA read of ``address``.

    The hash is by cache line, so every byte of one 64-byte line lands on
    the same engine.
    """
    if engines < 1:
        raise ValueError("engines must be at least 1")
    return (address // CACHE_LINE_BYTES) % engines
