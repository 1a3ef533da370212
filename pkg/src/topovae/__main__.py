import sys

from topovae.cli import main

sys.exit(main())
