from telephase.cli import main

raise SystemExit(main())
