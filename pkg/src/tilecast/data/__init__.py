from .traces import TraceRecord, TraceFormatError, load_traces, save_traces  # noqa: F401
from .frames import ArrayFrameSource, DirectoryFrameSource, write_frames  # noqa: F401
from .windows import (  # noqa: F401
    SplitSpec,
    TraceSample,
    WindowCounters,
    build_windows,
    split_dataset,
)
from .synth import SynthConfig, synth_dataset  # noqa: F401
