# geometry
PROFILE_ORIGIN_TOLERANCE = 1e-10  # psi(0) = 0 and psi'(0) = 1 within this tolerance
CONSTANT_POTENTIAL_TOLERANCE = 1e-12  # max |phi'| for a potential to count as constant
SAMPLE_SPACING = 2 ** -8  # base spacing of the radial sampling lattice
SAMPLE_MAX_HALVINGS = 6  # refinement levels before giving up on a sup/inf
REFINEMENT_TOLERANCE = 1e-6  # relative change accepted between two refinement levels
RADIAL_FLOOR = 1e-3  # curvature at r = 0 is read off at this radius (limit rule)
GAUSS_POINTS = 8  # quadrature nodes per half cell for the weighted cell volumes
MIN_NODES = 4
# nonlinearity
W_WINDOW = (1e-6, 1e6)  # default positivity window
PREDICATE_SAMPLES = 2001  # log-spaced w samples, doubled for the refinement check
PREDICATE_TOLERANCE = 1e-12  # relative slack before a sample counts as a violation
SINGULAR_NEIGHBOURHOOD = 1e-3  # relative width excluded around kinks of abs/pos
PARAMETER_GRID = 24  # alpha, beta and gamma search points for "for some" predicates
# cutoff
CUTOFF_INFLATION = 1.05  # certified constants are inflated by 5%
CERTIFICATE_TOLERANCE = 1e-9
CUTOFF_DENSITY = 10 ** 4
CUTOFF_EXPONENTS = (0.5, 0.75)
# solver
POSITIVITY_FLOOR = 1e-12
BLOW_UP = 1e12
CFL = 0.4
MIN_DT = 1e-14
MAX_STEPS = 50_000_000
STORED_LEVELS = 21
VERIFY_MIN_NODES = 8  # radial nodes required inside any verification ball
RELAXATION_TOLERANCE = 1e-8
RELAXATION_TIME = 50.0  # time budget of the parabolic relaxation
RELAXATION_CHECK_EVERY = 200  # steps between stationarity checks
# estimates
D_INFLATION = 1e-9  # auto D = (1 + D_INFLATION) * sup w
MARGIN_TOLERANCE = 1e-9
EPSILON = 0.5
LIOUVILLE_GRADIENT_RATIO = 1e-4
LIOUVILLE_TIME = 20.0
LIOUVILLE_GROWTH = 10.0  # sup w growth factor read as "no bounded stationary solution"
PATH_NODES = 16  # interior nodes of the discrete path optimisation
PATH_SWEEPS = 20000
STATIONARITY_TOLERANCE = 1e-6  # sup |Δ_φ w + G(w)| accepted as stationary
# identities
EXACT_RESIDUAL = 1e-11  # below this a residual is roundoff and carries no order
ORDER_RANGE = (1.5, 4.5)
RESIDUAL_BAND = (0.2, 0.6)  # verification band as fractions of R_max
QUADRATIC_SAMPLES = 10 ** 5
QUADRATIC_SEED = 20240607
# scenarios
WORKERS = 4
CALIBRATION_STABILITY = 0.2  # largest relative spread of empirical constants across resolutions
TOLERANCE_PROFILES = {
    "default": 1.0,
    "strict": 1e-2,
}
