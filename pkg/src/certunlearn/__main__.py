from certunlearn.cli import main

raise SystemExit(main())
