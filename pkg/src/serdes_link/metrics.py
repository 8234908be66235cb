"""Static power and area budgets.

Numbers are design constants, not simulated. All arithmetic is Decimal on
the decimal strings of the inputs, so totals like 437.7 mW come out exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Mapping

BLOCKS = ("serializer", "deserializer", "cdr", "tx", "rx")

# mW at 2 Gbps, 1.8 V
DESIGN_POWER_MW = {"serializer": "235", "deserializer": "128", "cdr": "59", "tx": "4.5",
                  "rx": "11.2"}
DESIGN_AREA_MM2 = "0.24"
DESIGN_AREA_SHARES = {"deserializer": "60", "tx": "0.2", "rx": "1.1"}


def _dec(x) -> Decimal:
    return x if isinstance(x, Decimal) else Decimal(str(x))


@dataclass(frozen=True)
class PowerBudget:
    serializer: Decimal = Decimal(0)
    deserializer: Decimal = Decimal(0)
    cdr: Decimal = Decimal(0)
    tx: Decimal = Decimal(0)
    rx: Decimal = Decimal(0)
    supply: Decimal = Decimal("1.8")
    bitrate: Decimal = Decimal("2e9")

    def __post_init__(self):
        for name in BLOCKS + ("supply", "bitrate"):
            value = _dec(getattr(self, name))
            object.__setattr__(self, name, value)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @classmethod
    def design(cls) -> PowerBudget:
        return cls(**{k: Decimal(v) for k, v in DESIGN_POWER_MW.items()})

    @classmethod
    def link_only(cls) -> PowerBudget:
        return cls(tx=Decimal(DESIGN_POWER_MW["tx"]), rx=Decimal(DESIGN_POWER_MW["rx"]))

    def blocks(self) -> dict[str, Decimal]:
        return {name: getattr(self, name) for name in BLOCKS}


@dataclass(frozen=True)
class BudgetReport:
    total_mw: Decimal
    energy_pj_per_bit: Decimal
    shares_pct: dict[str, Decimal] | None
    blocks_mw: dict[str, Decimal]
    degenerate: bool = False

    def to_csv(self) -> str:
        lines = ["block,power_mw,share_pct"]
        for name, p in self.blocks_mw.items():
            share = "" if self.shares_pct is None else _fmt(self.shares_pct[name], 4)
            lines.append(f"{name},{_fmt(p)},{share}")
        lines.append(f"total,{_fmt(self.total_mw)},{'' if self.shares_pct is None else '100'}")
        lines.append(f"energy_pj_per_bit,{_fmt(self.energy_pj_per_bit)},")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        lines = ["| block | power (mW) | share (%) |", "|---|---:|---:|"]
        for name, p in self.blocks_mw.items():
            share = "n/a" if self.shares_pct is None else _fmt(self.shares_pct[name], 2)
            lines.append(f"| {name} | {_fmt(p)} | {share} |")
        lines.append(f"| **total** | **{_fmt(self.total_mw)}** | |")
        lines.append("")
        lines.append(f"Energy efficiency: {_fmt(self.energy_pj_per_bit)} pJ/bit "
                     f"(~{self.energy_pj_per_bit.quantize(Decimal(1))} pJ/bit)")
        return "\n".join(lines) + "\n"


def _fmt(x: Decimal, places: int | None = None) -> str:
    if places is not None:
        x = x.quantize(Decimal(1).scaleb(-places))
    s = format(x.normalize(), "f")
    return s


def budget_report(b: PowerBudget) -> BudgetReport:
    """Total power, energy per bit and per-block shares.

    An all-zero budget has no meaningful shares; they come back as None with
    ``degenerate`` set.
    """
    if b.bitrate == 0:
        raise ValueError("bitrate must be nonzero for energy per bit")
    blocks = b.blocks()
    total = sum(blocks.values(), Decimal(0))
    # mW / (bit/s) = 1e-3 J/bit = 1e9 pJ/bit
    energy = total * Decimal("1e9") / b.bitrate
    if total == 0:
        return BudgetReport(total, energy, None, blocks, degenerate=True)
    shares = {name: p * 100 / total for name, p in blocks.items()}
    return BudgetReport(total, energy, shares, blocks)


@dataclass(frozen=True)
class AreaReport:
    total_mm2: Decimal
    rows: list[tuple[str, Decimal, Decimal]]  # (block, share %, mm^2)
    unassigned_pct: Decimal

    def to_csv(self) -> str:
        lines = ["block,share_pct,area_mm2"]
        for name, share, area in self.rows:
            lines.append(f"{name},{_fmt(share)},{_fmt(area)}")
        rest = self.total_mm2 * self.unassigned_pct / 100
        lines.append(f"unassigned,{_fmt(self.unassigned_pct)},{_fmt(rest)}")
        lines.append(f"total,100,{_fmt(self.total_mm2)}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        lines = ["| block | share (%) | area (mm^2) |", "|---|---:|---:|"]
        for name, share, area in self.rows:
            lines.append(f"| {name} | {_fmt(share)} | {_fmt(area)} |")
        rest = self.total_mm2 * self.unassigned_pct / 100
        lines.append(f"| unassigned | {_fmt(self.unassigned_pct)} | {_fmt(rest)} |")
        lines.append(f"| **total** | 100 | **{_fmt(self.total_mm2)}** |")
        return "\n".join(lines) + "\n"


def area_report(shares: Mapping[str, object] | None = None,
                total_mm2: object = DESIGN_AREA_MM2) -> AreaReport:
    shares = DESIGN_AREA_SHARES if shares is None else shares
    total = _dec(total_mm2)
    rows = []
    for name, share in shares.items():
        s = _dec(share)
        if not 0 <= s <= 100:
            raise ValueError(f"share for {name} must be within [0, 100], got {s}")
        rows.append((name, s, total * s / 100))
    assigned = sum((r[1] for r in rows), Decimal(0))
    if assigned > 100:
        raise ValueError(f"area shares sum to {assigned}% (> 100%)")
    return AreaReport(total, rows, 100 - assigned)
