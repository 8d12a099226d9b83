import lq_shrinkage

lq_shrinkage.main()
