"""
Electromagnetic materials and the built-in material library.
"""

from typing import Dict

from pydantic import BaseModel, ConfigDict, Field, model_validator

from qpack.core.constants import CONDUCTOR_SIGMA_MIN


class Material(BaseModel):
    """Electromagnetic properties of a material. kappa is informational only."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    sigma: float = Field(0.0, ge=0.0, description="Electrical conductivity (S/m)")
    eps_r: float = Field(1.0, description="Relative permittivity")
    mu_r: float = Field(1.0, gt=0.0, description="Relative permeability")
    kappa: float = Field(0.0, ge=0.0, description="Thermal conductivity (W/(m K))")
    is_pec: bool = False

    @model_validator(mode="after")
    def _check_permittivity(self) -> "Material":
        if not self.is_conductor and self.eps_r < 1.0:
            raise ValueError(f"dielectric {self.name!r} needs eps_r >= 1, got {self.eps_r}")
        return self

    @property
    def is_conductor(self) -> bool:
        """True for materials the lossless solver treats as metal."""
        return self.is_pec or self.sigma >= CONDUCTOR_SIGMA_MIN

    @property
    def is_void(self) -> bool:
        """Lossless vacuum-like material; a sheet of it opens an aperture in conductor sheets."""
        return not self.is_pec and self.sigma == 0.0 and self.eps_r == 1.0 and self.mu_r == 1.0


VACUUM = Material(name="vacuum")
COPPER = Material(name="copper", sigma=5.8e7, kappa=401.0)
# Cryogenic gold-plated copper, the package material of the loss study.
GOLD_PLATED_COPPER = Material(name="gold_plated_copper", sigma=4.5e9, kappa=300.0)
ALUMINIUM = Material(name="aluminium", sigma=0.0, kappa=0.1, is_pec=True)
PEC = Material(name="pec", is_pec=True)
SILICON = Material(name="silicon", eps_r=11.45, kappa=150.0)
SAPPHIRE = Material(name="sapphire", eps_r=9.4, kappa=35.0)
TMM10 = Material(name="tmm10", eps_r=9.2, kappa=0.76)

LIBRARY: Dict[str, Material] = {
    m.name: m
    for m in (VACUUM, COPPER, GOLD_PLATED_COPPER, ALUMINIUM, PEC, SILICON, SAPPHIRE, TMM10)
}


def material_by_name(name: str) -> Material:
    """Look up a library material by name."""
    try:
        return LIBRARY[name]
    except KeyError as e:
        raise KeyError(f"unknown material {name!r}; known: {sorted(LIBRARY)}") from e


def with_conductivity(material: Material, sigma: float) -> Material:
    """Copy of a conductor with a different conductivity."""
    return material.model_copy(update={"sigma": sigma})
