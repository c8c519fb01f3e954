"""Published reference results used as comparison targets by the reproduction suites.

Values are ``(estimate, half_width)`` where ``half_width`` is two standard
errors. Returns and regrets are per user summed over the study, in raw reward
units (mobile-health entries are stored unscaled, not in thousands).
"""
from __future__ import annotations

ENVS = ("ascb", "scb", "mobile_health")

# (column label, policy, wrapper)
MAIN_COLUMNS = (
    ("fixed 0.5", "fixed", "none"),
    ("ACTS", "acts", "none"),
    ("ACTS clip", "acts", "clip"),
    ("BOSE", "bose", "none"),
    ("BOSE clip", "bose", "clip"),
    ("linUCB clip", "linucb", "clip"),
)

TYPE1 = {
    "ascb": ((0.060, 0.015), (0.074, 0.017), (0.054, 0.014), (0.078, 0.017), (0.063, 0.015), (0.060, 0.015)),
    "scb": ((0.053, 0.014), (0.054, 0.014), (0.06, 0.015), (0.071, 0.016), (0.071, 0.016), (0.058, 0.015)),
    "mobile_health": ((0.072, 0.016), (0.075, 0.017), (0.061, 0.015), (0.062, 0.015), (0.062, 0.015), (0.072, 0.016)),
}

_NA = None
POWER = {
    "ascb": {
        "reject_rate": ((0.925, 0.017), (0.241, 0.027), (0.836, 0.023), (0.340, 0.030), (0.848, 0.023), (0.791, 0.026)),
        "avg_return": ((-3.210, 0.067), (-2.425, 0.066), (-2.696, 0.066), (-2.755, 0.071), (-2.837, 0.068), (-2.470, 0.066)),
        "reg": ((3.210, 0.067), (2.425, 0.066), _NA, (2.755, 0.071), _NA, _NA),
        "reg_c": ((2.949, 0.067), _NA, (2.434, 0.066), _NA, (2.575, 0.068), (2.208, 0.066)),
    },
    "scb": {
        "reject_rate": ((0.931, 0.016), (0.594, 0.031), (0.861, 0.022), (0.628, 0.031), (0.847, 0.023), (0.788, 0.026)),
        "avg_return": ((-0.143, 0.067), (0.590, 0.068), (0.397, 0.068), (0.434, 0.070), (0.190, 0.068), (0.513, 0.068)),
        "reg": ((3.479, 0.067), (2.747, 0.068), _NA, (2.903, 0.070), _NA, _NA),
        "reg_c": ((2.759, 0.067), _NA, (2.219, 0.068), _NA, (2.426, 0.068), (2.104, 0.068)),
    },
    "mobile_health": {
        "reject_rate": ((0.911, 0.018), (0.390, 0.031), (0.789, 0.026), (0.667, 0.030), (0.901, 0.019), (0.797, 0.025)),
        "avg_return": ((8089.0, 10.0), (8271.0, 9.0), (8204.0, 10.0), (8109.0, 10.0), (8094.0, 10.0), (8201.0, 10.0)),
        "reg": ((223.0, 10.0), (41.0, 9.0), _NA, (204.0, 10.0), _NA, _NA),
        "reg_c": ((117.0, 10.0), _NA, (3.0, 10.0), _NA, (112.0, 10.0), (5.0, 10.0)),
    },
}

ROBUST_POLICIES = (("ACTS", "acts"), ("BOSE", "bose"), ("linUCB", "linucb"))

# effect size used by the designer: under (/1.1), exact, over (x1.1)
EFFECT_SCALES = (("delta_est < delta", 1.0 / 1.1), ("delta_est = delta", 1.0), ("delta_est > delta", 1.1))
ROBUST_EFFECT = {
    "ascb": {"acts": (0.889, 0.836, 0.796), "bose": (0.894, 0.848, 0.781), "linucb": (0.857, 0.791, 0.698)},
    "scb": {"acts": (0.881, 0.861, 0.820), "bose": (0.889, 0.847, 0.815), "linucb": (0.879, 0.788, 0.683)},
    "mobile_health": {"acts": (0.862, 0.789, 0.724), "bose": (0.918, 0.901, 0.841), "linucb": (0.879, 0.797, 0.726)},
}

# noise columns per environment; the mobile-health misestimate is the weekend pattern
NOISE_COLUMNS = {
    "ascb": (("sigma_est > sigma", "over"), ("sigma_est = sigma", "exact"), ("sigma_est < sigma", "under")),
    "scb": (("sigma_est > sigma", "over"), ("sigma_est = sigma", "exact"), ("sigma_est < sigma", "under")),
    "mobile_health": (("sigma_est != sigma", "weekend"), ("sigma_est = sigma", "exact")),
}
ROBUST_NOISE = {
    "ascb": {"acts": (0.883, 0.836, 0.799), "bose": (0.868, 0.843, 0.797), "linucb": (0.854, 0.793, 0.7)},
    "scb": {"acts": (0.896, 0.861, 0.841), "bose": (0.888, 0.844, 0.794), "linucb": (0.865, 0.788, 0.721)},
    "mobile_health": {"acts": (0.802, 0.789), "bose": (0.801, 0.901), "linucb": (0.824, 0.793)},
}

MARGINAL_POLICIES = (("fixed 0.5", "fixed"),) + ROBUST_POLICIES
MARGINAL_COLUMNS = (("true B", "correct"), ("B = 1", "constant"))
ROBUST_MARGINAL = {
    "ascb": {"fixed": (0.925, 0.910), "acts": (0.836, 0.826), "bose": (0.848, 0.837), "linucb": (0.791, 0.757)},
    "scb": {"fixed": (0.931, 0.926), "acts": (0.861, 0.853), "bose": (0.847, 0.846), "linucb": (0.788, 0.782)},
    "mobile_health": {"fixed": (0.911, 0.887), "acts": (0.789, 0.792), "bose": (0.901, 0.885), "linucb": (0.797, 0.818)},
}

EFFECT_MODEL_COLUMNS = {
    "ascb": (("true Z", "full"), ("drop", "drop_last"), ("nonlinear", "nonlinear")),
    "scb": (("true Z", "full"), ("drop", "drop_last")),
    "mobile_health": (("true Z", "full"), ("drop", "drop_last")),
}
ROBUST_EFFECT_MODEL = {
    "ascb": {"fixed": (0.925, 0.840, 0.926), "acts": (0.836, 0.608, 0.83), "bose": (0.848, 0.524, 0.847),
             "linucb": (0.791, 0.427, 0.801)},
    "scb": {"fixed": (0.931, 0.933), "acts": (0.861, 0.882), "bose": (0.844, 0.864), "linucb": (0.788, 0.787)},
    "mobile_health": {"fixed": (0.911, 0.927), "acts": (0.789, 0.516), "bose": (0.901, 0.709),
                      "linucb": (0.797, 0.398)},
}

# wrapper comparison: per env and policy, columns none / flip / drop / clip
WRAPPER_COLUMNS = ("none", "flip", "drop", "clip")
WRAPPER_POWER = {
    "scb": {"acts": (0.594, 0.892, 0.845, 0.860), "bose": (0.628, 0.86, 0.863, 0.848), "linucb": (None, 0.797, 0.775, 0.788)},
    "ascb": {"acts": (0.241, 0.873, 0.802, 0.836), "bose": (0.34, 0.801, 0.804, 0.844), "linucb": (None, 0.783, 0.806, 0.791)},
    "mobile_health": {"acts": (0.39, 0.819, 0.801, 0.789), "bose": (0.667, 0.858, 0.856, 0.901),
                      "linucb": (None, 0.794, 0.817, 0.793)},
}
WRAPPER_AVG_RETURN = {
    "scb": {"acts": (0.590, 0.125, 0.420, 0.390), "bose": (0.434, -0.033, 0.179, 0.190), "linucb": (1.243, 0.455, 0.508, 0.513)},
    "ascb": {"acts": (-2.425, -2.947, -2.778, -2.696), "bose": (-2.755, -3.110, -2.985, -2.837),
             "linucb": (-1.655, -2.364, -2.349, -2.470)},
    "mobile_health": {"acts": (8271.0, 8185.0, 8206.0, 8204.0), "bose": (8106.0, 8100.0, 8095.0, 8097.0),
                      "linucb": (8295.0, 8189.0, 8192.0, 8201.0)},
}
WRAPPER_REGRET = {
    # reg for the unwrapped policy, reg_c for the wrapped ones
    "scb": {"acts": (2.747, 2.492, 2.197, 2.219), "bose": (2.903, 2.649, 2.437, 2.426), "linucb": (2.093, 2.161, 2.109, 2.104)},
    "ascb": {"acts": (2.425, 2.666, 2.516, 2.434), "bose": (2.755, 2.848, 2.724, 2.575), "linucb": (1.655, 2.102, 2.087, 2.208)},
    "mobile_health": {"acts": (41.0, 20.0, -36.0, 25.0), "bose": (203.0, 105.0, 111.0, 109.0),
                      "linucb": (17.0, 16.0, 14.0, 6.0)},
}

# solved clip-range lower bounds under designer misestimates
SOLVED_PI_MIN_EFFECT = {
    "scb": (0.288, 0.216, 0.168),
    "ascb": (0.301, 0.225, 0.174),
    "mobile_health": (0.335, 0.243, 0.187),
}
SOLVED_PI_MIN_NOISE = {
    # sigma_est < sigma, =, >
    "scb": (0.170, 0.216, 0.284),
    "ascb": (0.176, 0.225, 0.297),
}
SOLVED_PI_MIN_WEEKEND = {"mobile_health": 0.433}
