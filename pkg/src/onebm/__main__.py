import sys

from onebm.cli import main

sys.exit(main())
