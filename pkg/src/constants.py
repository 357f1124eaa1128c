import os
from pathlib import Path

# ── Project root ───────────────────────────────────────────────────────────────
# constants.py is in src/, so one level up is the repository root
ROOT = Path(__file__).resolve().parents[1]

# ── Run directory ──────────────────────────────────────────────────────────────
# Use $SEMISEP_RUN_ROOT if set, otherwise default to "<project root>/runs"
RUN_ROOT = Path(os.getenv("SEMISEP_RUN_ROOT", ROOT / "runs"))

# ── Audio representation ───────────────────────────────────────────────────────
SAMPLE_RATE = 8000
FFT_SIZE = 512
HOP_SIZE = 256                      # 50% overlap
N_BINS = FFT_SIZE // 2 + 1          # 257 analysis bins
WINDOW = "hann"
RESAMPLE_WINDOW = ("kaiser", 5.0)   # polyphase windowed-sinc, > 60 dB stop band

# Loudness augmentation applied to real source excerpts fed to the critics
LOUDNESS_RANGE = (0.2, 1.2)

# ── Separator (U-Net) defaults ─────────────────────────────────────────────────
SEPARATOR_LEVELS = 4
SEPARATOR_BASE_FILTERS = 16
OUTPUT_FRAMES = 66
OUTPUT_BINS = 256
SEPARATOR_LEAK = 0.01

# ── Critic defaults ────────────────────────────────────────────────────────────
CRITIC_STRIDED_LAYERS = 4
CRITIC_FREQUENCY_LAYERS = 2
CRITIC_BASE_FILTERS = 32
CRITIC_DENSE_UNITS = 32
CRITIC_LEAK = 0.2

# ── Training schedule ──────────────────────────────────────────────────────────
LEARNING_RATE = 5e-5
BATCH_SIZE = 64
STEPS_PER_EPOCH = 1000
PATIENCE_EPOCHS = 6
N_DISC = 5
LAMBDA_GP = 10.0
SEPARATOR_BETAS = (0.9, 0.999)
CRITIC_BETAS = (0.5, 0.9)
ADAM_EPS = 1e-8

# Mode -> (alpha = beta, active critic indices)
MODE_WEIGHTS = {
    "baseline": (0.0, ()),
    "V": (0.01, (0,)),
    "VA": (0.001, (0, 1)),
}

# Default names of the K toy sources, indexed by source number
SOURCE_NAMES = ("voice", "accompaniment")

# Manifest pools
PAIRED_POOLS = ("paired", "validation", "test")
MANIFEST_POOLS = ("paired", "unlabelled", "solo", "validation", "test")
