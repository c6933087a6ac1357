import logging

from driftlab import defaults, exceptions

logger = logging.getLogger(__name__)


class Config:
    def __init__(self,
                 out_dir='driftlab-out',
                 workers=defaults.WORKERS,
                 tolerance_profile='default',
                 debug=False,
                 **kwargs):
        """
        Initialize a configuration object for scenario runs and the command line

        Args:
            out_dir (str): the directory where reports, tables and figures are written
            workers (int): the number of jobs run in parallel
            tolerance_profile (str): one of defaults.TOLERANCE_PROFILES, "strict" scales the
                margin and residual tolerances by 1e-2
            debug (bool): enable debug logging

        Kwargs:
            :margin_tolerance (float): slack before a margin counts as negative [optional, default: defaults.MARGIN_TOLERANCE]
            :residual_tolerance (float): residual accepted for exact identities [optional, default: 1e-11]
            :calibration_stability (float): largest relative spread of a calibrated constant, default 0.2
            :plots (bool): emit the SVG figures of every job with a table, default True
        """
        if tolerance_profile not in defaults.TOLERANCE_PROFILES:
            raise exceptions.ConfigException(f"Unknown tolerance profile {tolerance_profile!r}, "
                                             f"expected one of {sorted(defaults.TOLERANCE_PROFILES)}")
        if int(workers) < 1:
            raise exceptions.ConfigException(f"workers must be at least 1, got {workers}")
        self.out_dir = out_dir
        self.workers = int(workers)
        self.tolerance_profile = tolerance_profile
        scale = defaults.TOLERANCE_PROFILES[tolerance_profile]
        self.margin_tolerance = kwargs.get("margin_tolerance", defaults.MARGIN_TOLERANCE) * scale
        self.residual_tolerance = kwargs.get("residual_tolerance", defaults.EXACT_RESIDUAL) * scale
        self.calibration_stability = kwargs.get("calibration_stability", defaults.CALIBRATION_STABILITY)
        self.plots = kwargs.get("plots", True)
        self.debug = debug
        if debug:
            logging.getLogger().setLevel(logging.DEBUG)

    def to_dict(self):
        return {
            "out_dir": self.out_dir,
            "workers": self.workers,
            "tolerance_profile": self.tolerance_profile,
            "margin_tolerance": self.margin_tolerance,
            "residual_tolerance": self.residual_tolerance,
            "calibration_stability": self.calibration_stability,
            "plots": self.plots,
            "debug": self.debug,
        }

    def __str__(self):
        return f"out_dir:{self.out_dir} workers:{self.workers} tolerance_profile:{self.tolerance_profile}"
