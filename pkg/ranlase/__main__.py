import sys

from ranlase.cli import main

sys.exit(main())
