"""
Встроенные сценарии для команды `reproduce`: тексты в том же формате,
что и пользовательские файлы сценариев.
"""
from cquant.errors import ConfigurationError
from cquant.scenario import Scenario, parse_scenario

CIRCLE_DISC = """
[measure]
kind = uniform_circle
center = 0, 0
radius = 1
nodes = 4096

[constraint]
kind = ball
center = 0, 0
radius = 1

[solver]
r = 2
n_list = 2, 3, 4, 8, 16, 32, 64
restarts = 8

[analysis]
box_scales = 2^-2, 2^-3, 2^-4, 2^-5, 2^-6, 2^-7
ahlfors_d = 1
ahlfors_radii = 0.5, 0.2, 0.1, 0.05, 0.02, 0.01
eps = 0.2, 0.1, 0.05, 0.02
u3_s = 1
pullback_n = 8
witness_radii = 0.1, 0.01
require_dimension = true
"""

CANTOR_LINE = """
[measure]
kind = cantor
a = 0, 0
b = 1, 0
depth = 12

[constraint]
kind = line
point = 0, 1
direction = 1, 0
extent = 2

[solver]
r = 2
n_list = 2, 4, 8, 16, 32
restarts = 8

[analysis]
box_scales = 3^-2, 3^-3, 3^-4, 3^-5, 3^-6, 3^-7, 3^-8
ahlfors_d = 0.630929753571
ahlfors_radii = 3^-1, 3^-2, 3^-3, 3^-4, 3^-5, 3^-6
eps = 3^-1, 3^-2, 3^-3, 3^-4
u3_s = 0.630929753571
pullback_n = 4
witness_radii = 0.1, 0.01
require_dimension = true
"""

DIRAC_CIRCLE = """
[measure]
kind = dirac
point = 0, 0

[constraint]
kind = circle
center = 0, 0
radius = 1

[solver]
r = 2
n_list = 1, 2, 3, 4
restarts = 4

[analysis]
box_scales = 2^-2, 2^-3, 2^-4, 2^-5
eps = 0.5, 0.1
pullback_n = 2
"""

VSHAPE = """
[measure]
kind = polyline
vertices = -1, -1; 0, 0; 1, -1
nodes = 2048

[constraint]
kind = union
members = right, left, top

[constraint.right]
kind = polyline
vertices = 3, 2; 1, 0; 3, -2

[constraint.left]
kind = polyline
vertices = -3, 2; -1, 0; -3, -2

[constraint.top]
kind = polyline
vertices = -3, 4; 0, 1; 3, 4

[solver]
r = 2
n_list = 2, 4, 8, 16, 32
restarts = 8

[analysis]
box_scales = 2^-2, 2^-3, 2^-4, 2^-5, 2^-6
eps = 0.1, 0.05, 0.02
probes = 0, 1
pullback_n = 4
"""

CIRCLE_BALL_HALF = """
[measure]
kind = uniform_circle
center = 0, 0
radius = 1
nodes = 4096

[constraint]
kind = ball
center = 0, 0
radius = 0.5

[solver]
r = 2
n_list = 2, 4, 8, 16, 32
restarts = 8

[analysis]
box_scales = 2^-2, 2^-3, 2^-4, 2^-5, 2^-6, 2^-7
ahlfors_d = 1
ahlfors_radii = 0.25, 0.1, 0.05, 0.02, 0.01
eps = 0.1, 0.05, 0.02
u3_s = 1
perturb_eps = 1e-2, 1e-3
perturb_d = 1
pullback_n = 8
witness_radii = 0.1, 0.01
"""

PRESETS = {
    "circle-disc": CIRCLE_DISC,
    "cantor-line": CANTOR_LINE,
    "dirac-circle": DIRAC_CIRCLE,
    "vshape": VSHAPE,
    "circle-ball-half": CIRCLE_BALL_HALF,
}


def preset_names():
    return sorted(PRESETS)


def load_preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ConfigurationError(f"Неизвестный пресет {name}, доступны: {', '.join(preset_names())}")
    return parse_scenario(PRESETS[name], name)
