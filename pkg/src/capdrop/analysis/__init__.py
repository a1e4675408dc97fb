"""Stationary-state analysis, ring MFD and detector-based capacity-drop estimation."""

from .detector import (
    CapacityDropEstimate,
    DetectorRecord,
    EstimationError,
    density_to_occupancy,
    estimate_capacity_drop,
    near_stationary_windows,
    occupancy_to_density,
    read_detector_csv,
    virtual_detector,
    write_detector_csv,
)
from .mfd import RingMFD, classify_link, classify_ring_state, ring_flows_at, ring_mfd, scenario_density
from .statics import ObservedFD, StaticsSolution, observable_fd, open_road_statics
