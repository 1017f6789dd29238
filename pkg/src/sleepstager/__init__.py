"""Single-channel EEG sleep staging: model, data pipeline, training, metrics."""

__version__ = "0.1.0"

STAGES = ("W", "N1", "N2", "N3", "REM")
STAGE_TO_INDEX = {name: i for i, name in enumerate(STAGES)}
NUM_STAGES = 5
EXCLUDED = -1
EPOCH_SECONDS = 30.0
