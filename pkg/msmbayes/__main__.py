from msmbayes.main import main

main()
