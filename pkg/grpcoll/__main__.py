import sys

from grpcoll.cli import main

sys.exit(main())
