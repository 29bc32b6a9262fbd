"""Trace-driven simulator of shared last-level-cache interference on an integrated GPU."""
from .cache import (AccessOutcome, CacheGeometry, CacheState, CacheStats, Kind, Outcome, access,
                    footprint_lines, set_index)
from .engine import SimConfig, SimResult, StreamBinding, run, run_isolated, slowdown
from .experiments import (CALIBRATED_TIMING, CalibrationResult, CalibrationTarget, Scenario,
                          SweepRow, calibrate, infer_line_size, sweep_copy_lines, sweep_stride)
from .timing import ChannelState, TimingParams, service_transaction
from .workloads import (Buffer, BumpAllocator, CopyLoop, Gemm, Interference, Requestor,
                        Transaction, Vadd, WarpModel, coalesce_warp, gen_copy_trace,
                        gen_gemm_trace, gen_interference_trace, gen_vadd_trace)

__version__ = "0.1.0"
