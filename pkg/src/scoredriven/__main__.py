import sys

from scoredriven.cli import main

sys.exit(main())
