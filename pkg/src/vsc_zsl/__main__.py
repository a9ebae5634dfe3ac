import sys

from vsc_zsl.cli import main

sys.exit(main())
