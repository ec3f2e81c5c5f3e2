from src.physe_inv.main import run

if __name__ == '__main__':
    run()
