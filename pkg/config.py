"""
Config file with the default geometry, quadrature, solver and scenario
parameters. Experiment TOML files (see experiments/) override these values.
"""

# BALL AND TESSEROID GEOMETRY

BALL_RADIUS = 1.0  # unit ball, physical radii only enter through I/O scaling
EARTH_RADIUS_KM = 6371.0
CMB_RADIUS_KM = 3482.0
RHO = CMB_RADIUS_KM / EARTH_RADIUS_KM  # deepest allowed tesseroid centre

EPS_R = 1e-2
EPS_PHI = 1e-2
EPS_T = 1e-2

DELTA_POLE = 1e-6  # switch to the pole limits of the Legendre quotients

# QUADRATURE

GK_TOLERANCE = 1e-4  # relative, as used for the DSPO and inner products
GK_TOL_ABS = 1e-12
GK_MAX_SUBDIVISIONS = 2000
GRAM_GK_TOLERANCE = 1e-10  # radial integrals of the inner products
LATITUDE_GL_POINTS = 10_000  # raise to 1_000_000 for production accuracy

# STARTING DICTIONARY

MAX_RADIAL_DEGREE = 5
MAX_ANGULAR_DEGREE = 5
FEHF_GRID_SIZE = (5, 5, 5)  # centres per dimension (R, Phi, T)

# SOLVER

LAMBDA_FACTORS = [1e-1, 1e-2, 1e-3, 1e-4]  # multiples of ||y||
MAX_ITERATIONS = 300
NOISE_LEVEL = 0.05
BLOW_UP_THRESHOLD = 2.0
CHI2_TOLERANCE = 1e-8
NO_IMPROVEMENT_THRESHOLD = 1e-14
PACKAGE_SIZE = 1000
PACKAGE_THRESHOLD = 0.5
LEARNING_ENABLED = True

# LEARNING ADD-ON (global DIRECT-L stage, local subplex stage)

GLOBAL_XTOL_REL = 1e-4
GLOBAL_FTOL_REL = 1e0
LOCAL_XTOL_REL = 1e-8
LOCAL_FTOL_REL = 1e-4
MAX_EVALUATIONS = 10_000
MAX_TIME_SECONDS = 600.0

# SCENARIO (two plumes below the Volcanic Eifel and Yellowstone)

PLUME_CENTERS = [
    (6.7, 50.2),  # Eifel (lon, lat) in degrees
    (-110.6, 44.4),  # Yellowstone
]
PLUME_BASE_RADIUS = 0.08  # cone radius at the CMB (unit-ball lengths)
PLUME_TOP_RADIUS = 0.15  # cone radius at the surface
PLUME_AMPLITUDE = 10.0  # slowness deviation in s per unit length
N_SYNTHETIC_RAYS = 5000
DEPTH_BIASED_RAYS = True
REFERENCE_VELOCITY = None  # km/s, enables dc/c grids when set

GRID_LAYERS = 12
GRID_N_LON = 73
GRID_N_LAT = 37

# RUN AND OUTPUT

SEED = 0
THREADS = 1
MODE = "synthetic"
RAY_FILE = ""
OUTPUT_DIR = "Data/Results"
DIRECTORY_GRIDS = "grids"
LEDGER_FILE = "ledger.jsonl"
ELEMENTS_FILE = "elements.json"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"  # wall time, kept out of the reproducible summary
