import sys

from dpconsider.main import main

sys.exit(main())
