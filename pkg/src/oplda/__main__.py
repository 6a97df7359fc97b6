import sys

from oplda.cli import main

sys.exit(main())
