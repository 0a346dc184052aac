import sys

from momentum_workbench.cli import main

sys.exit(main())
