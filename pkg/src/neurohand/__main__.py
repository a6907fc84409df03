import sys

from neurohand.cli import main

sys.exit(main())
