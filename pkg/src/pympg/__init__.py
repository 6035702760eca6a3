from pympg.util import *
from pympg.game import *
from pympg.potential import *
from pympg.equilibrium import *
from pympg.learning import *
from pympg.counterexample import *

# flake8: noqa
__version__ = "0.1.0.dev0"
