import os

from dotenv import load_dotenv

load_dotenv()


def _get_env(name, default):
    return os.environ.get(name, default)


# Simulator defaults (urban macro network)
N_BASE_STATIONS = 7
SECTORS_PER_STATION = 3
N_UES = 2000
CARRIER_FREQ_HZ = 2e9
TRAFFIC_VOLUME_MBPS = 20.0
ANTENNA_HEIGHT_M = 32.0
MIN_TILT_DEG = 1.0
MAX_TILT_DEG = 16.0
INTER_SITE_DISTANCE_M = 500.0
UE_HEIGHT_M = 1.5
RSRP_COVERAGE_THRESHOLD_DBM = -110.0
SINR_QUALITY_THRESHOLD_DB = 0.0
TX_POWER_DBM = 46.0
VERTICAL_BEAMWIDTH_DEG = 10.0
HORIZONTAL_BEAMWIDTH_DEG = 65.0
MAX_ANTENNA_GAIN_DBI = 15.0
VERTICAL_SIDELOBE_DB = 20.0
HORIZONTAL_MAX_ATTENUATION_DB = 30.0
NOISE_FLOOR_DBM = -104.0  # thermal noise over 10 MHz
PENETRATION_LOSS_DB = 20.0
N_SUBCARRIERS = 600

# Episode mechanics
EPISODE_LENGTH = 20
N_TRAIN_EPISODES = 200
N_EVAL_EPISODES = 25

# DQN agent
DQN_LEARNING_RATE = 0.001
DQN_BATCH_SIZE = 50
DQN_DISCOUNT = 0.0
DQN_HIDDEN = (32, 32)
REPLAY_CAPACITY = 10_000
EPSILON_START = 1.0
EPSILON_END = 0.05
EPSILON_DECAY_EPISODES = 50

# Actor-critic agent
AC_LEARNING_RATE = 0.03
AC_DISCOUNT = 0.0
AC_HIDDEN = (32,)

# Baselines
RULE_COV_HIGH = 0.3
RULE_QUAL_HIGH = 0.3
OFFLINE_EPOCHS = 20
OFFLINE_BATCH_SIZE = 50
OFFLINE_LEARNING_RATE = 0.001

# State predictor
PREDICTOR_HIDDEN = (64, 64)
PREDICTOR_EPOCHS = 30
PREDICTOR_BATCH_SIZE = 50
PREDICTOR_LEARNING_RATE = 0.001
PREDICTOR_HOLDOUT_FRACTION = 0.2
PREDICTOR_RMSE_THRESHOLD = 0.1  # per KPI, held out, on simulator data

# k-shield
K_INITIAL = 0.95
K_DIMINISH = 0.1
K_WINDOW = 2

# Experiment harness
N_SEEDS = 6
SMOOTHING_WINDOW = 5
MAX_WORKERS = int(_get_env("TILTSHIELD_MAX_WORKERS", "4"))

# Logging configuration
LOG_FILE_NAME = _get_env("TILTSHIELD_LOG_FILE", "run.log")
LOG_LEVEL = _get_env("TILTSHIELD_LOG_LEVEL", "INFO")

# Dataset synthesis
SYNTH_SAMPLES = 10_000
SYNTH_EPISODE_LENGTH = 5
EPISODE_LOG_INTERVAL = 10
