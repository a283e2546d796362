"""One synthetic scenario: layout, detections and contamination under a noise profile."""

from dataclasses import dataclass
from typing import List

from geometry.projection import grid_from_config
from rng import make_rng
from simulation.detections import contaminate, detect_objects, noise_profile
from simulation.layout import Layout, synth_layout
from storage.models import Detection, GridSpec, GroundTruthObject, NoiseProfile


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    profile: NoiseProfile
    layout: Layout
    detections: List[Detection]
    phantoms: List[GroundTruthObject]

    @property
    def n_contaminants(self) -> int:
        return sum(d.is_contaminant for d in self.detections)


def simulate_scenario(cfg) -> Scenario:
    """Layout, clean detections, then contamination, each from its own seeded stream."""
    grid = grid_from_config(cfg)
    sim = cfg.simulation
    profile = noise_profile(sim.noise_level)

    layout = synth_layout(grid, sim.n_objects, sim.n_cameras, make_rng(cfg.seed, "layout"),
                          block_size=sim.block_size, block_depth=sim.block_depth)
    clean = detect_objects(layout.cameras, layout.objects, profile, grid,
                           make_rng(cfg.seed, "detections"), sim.confidence_rate)
    detections, phantoms = contaminate(clean, layout.cameras, profile, grid,
                                       make_rng(cfg.seed, "contamination"), sim.confidence_rate)
    return Scenario(grid=grid, profile=profile, layout=layout,
                    detections=detections, phantoms=phantoms)
