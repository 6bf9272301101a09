from coopcache.cli import main
import sys
sys.exit(main())
