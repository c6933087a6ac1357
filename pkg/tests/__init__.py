import logging
# for tempdir


logging.getLogger("driftlab").setLevel(logging.DEBUG)
logging.getLogger("matplotlib").setLevel(logging.WARNING)
logging.root.setLevel(logging.DEBUG)


# kernel windows shared by the tests
KERNEL_T0 = 1.0
KERNEL_T1 = 2.0
