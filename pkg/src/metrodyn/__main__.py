import sys

from metrodyn.cli import main

sys.exit(main())
