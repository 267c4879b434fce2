import sys
from adaptdp.cli import main

sys.exit(main())
