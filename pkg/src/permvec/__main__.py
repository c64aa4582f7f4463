from permvec.cli import main
import sys

sys.exit(main())
