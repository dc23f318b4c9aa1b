"""FMCW automotive-radar mutual interference simulation and mitigation.

The processing chain: synthesize an interfered FMCW scene (radar_sim),
transform frames to the time-frequency domain (tf_engine), detect
interference lines with a power-weighted Hough transform (hough), repair
the flagged cells with per-slice AR prediction (reconstruction), and score
the recovery against ground truth (metrics).  Reference methods live in
baselines; pipeline/cli orchestrate the studies.
"""

from .baselines import (
    CfarConfig,
    ImatConfig,
    TimeMask,
    apply_time_baseline,
    burg,
    cfar_burg,
    cfar_detect,
    stft_ar_manual,
    time_mask_from_cfar,
)
from .hough import (
    DetectedLine,
    HoughAccumulator,
    HoughConfig,
    detect_lines,
    detect_lines_sequential,
    hough_accumulate,
    line_to_cells,
    physical_threshold,
)
from .metrics import (
    MetricsReport,
    RdMap,
    cosine_similarity,
    evm,
    find_mainlobe,
    islr,
    pslr,
    range_profile,
    rd_map,
    report,
    velocity_profile,
)
from .pipeline import (
    METHODS,
    ProcessingConfig,
    SweepSpec,
    calibrate_threshold_factor,
    load_run_config,
    mitigate_frame,
    oracle_time_ranges,
    run_rd_evaluation,
    run_single_evaluation,
    run_sweep,
)
from .radar_sim import (
    BasebandFrame,
    ReceivedRecord,
    chirp_phase,
    dechirp,
    echo_power,
    interference_power,
    simulate_scenario,
    sir,
    synthesize_received,
)
from .reconstruction import (
    ArConfig,
    RepairMask,
    fit_ar,
    mitigate,
    mitigate_detailed,
    repair_slice,
    select_order,
)
from .scenario import (
    ConfigError,
    InterfererSpec,
    LpfSpec,
    NoiseSpec,
    RadarParams,
    ScenarioConfig,
    TargetSpec,
)
from .tf_engine import Spectrogram, StftConfig, istft, power_spectrogram, stft

__version__ = "0.1.0"
